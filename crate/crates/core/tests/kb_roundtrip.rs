use linkground::embedder::{Embedder, HashEmbedder};
use linkground::kb::{build_kb, fixture_key, BuildOptions, ExtDocsKB, FixtureFetcher};
use linkground_testkit::fixture::{write_fixture, BREAD_URL, STRENGTH_URL};

fn bits(kb: &ExtDocsKB) -> Vec<(String, usize, String, Vec<u32>)> {
    kb.urls()
        .flat_map(|u| kb.get(u).unwrap().iter())
        .map(|r| (r.doc_url.clone(), r.sentence_index, r.text.clone(), r.vector.as_slice().iter().map(|x| x.to_bits()).collect()))
        .collect()
}

#[test]
fn save_load_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let fx = write_fixture(dir.path(), fixture_key).unwrap();
    let e = HashEmbedder::default();
    let (kb, report) = build_kb(&[STRENGTH_URL, BREAD_URL, "https://missing.example/"], &FixtureFetcher::new(&fx.docs_dir), &e, &BuildOptions::default());
    assert_eq!(report.documents, 2);
    assert_eq!(report.failures.len(), 1);
    assert!(kb.sentence_count() >= 10);

    let a = dir.path().join("kb_a");
    kb.save(&a).unwrap();
    let loaded = ExtDocsKB::load(&a).unwrap();
    assert_eq!(bits(&loaded), bits(&kb));
    assert_eq!(loaded.fingerprint(), &e.fingerprint());

    let b = dir.path().join("kb_b");
    loaded.save(&b).unwrap();
    for f in ["manifest.json", "sentences.jsonl", "vectors.f32"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}
