//! Small deterministic corpus for end-to-end runs: one month of 50 dump
//! comments over four threads and two linked HTML documents.

use std::path::{Path, PathBuf};

pub const STRENGTH_URL: &str = "https://fixture.example/strength-training";
pub const BREAD_URL: &str = "https://fixture.example/sourdough";
pub const PROFILE_AUTHOR: &str = "lifter_lou";

pub struct Fixture {
    pub dump: PathBuf,
    pub docs_dir: PathBuf,
    pub blocklist_domains: PathBuf,
    pub blocklist_ext: PathBuf,
    pub comment_count: usize,
}

const STRENGTH_DOC: &str = r#"<html><head><title>Strength training basics</title><style>p{margin:0}</style></head><body>
<h1>Strength training basics</h1>
<p>Progressive overload means adding a little weight or a few reps every week.</p>
<p>Compound lifts like the squat and deadlift train many muscles at once.</p>
<p>Most beginners gain strength quickly when they lift three times a week.</p>
<p>Sleep and protein matter as much as the training program itself.</p>
<p>Rest at least two minutes between heavy sets to recover fully.</p>
<p>Good form protects your back and knees from injury.</p>
<script>track();</script>
<p>A deload week every two months lets tired joints recover.</p>
</body></html>"#;

const BREAD_DOC: &str = r#"<html><body>
<h1>Baking sourdough at home</h1>
<p>A sourdough starter is a mix of flour and water full of wild yeast.</p>
<p>Feed the starter daily and keep it at room temperature.</p>
<p>Long cold fermentation in the fridge gives the bread a deeper flavor.</p>
<p>Bake the loaf in a covered pot to trap steam for a crisp crust.</p>
<p>Let the bread cool for an hour before you slice it &amp; eat it.</p>
</body></html>"#;

struct Thread {
    sub: &'static str,
    url: Option<&'static str>,
    lines: [&'static str; 11],
}

const THREADS: [Thread; 4] = [
    Thread {
        sub: "Fitness",
        url: Some(STRENGTH_URL),
        lines: [
            "What is the best way to get stronger as a beginner?",
            "This guide explains progressive overload really well",
            "I tried adding weight every week and my squat went up fast.",
            "Did you also add more sets or only more weight?",
            "Only more weight, the sets stayed the same each week.",
            "Compound lifts were the biggest change for me honestly.",
            "Which compound lifts do you do each week then?",
            "Squat, deadlift and bench press three times a week.",
            "Sleep made a bigger difference than the program for me.",
            "How many hours of sleep do you usually get now?",
            "About eight hours and my lifts keep going up.",
        ],
    },
    Thread {
        sub: "Breadit",
        url: Some(BREAD_URL),
        lines: [
            "How do you keep a sourdough starter alive for months?",
            "Feeding it daily works, this page covers it",
            "I keep mine on the counter and feed it every morning.",
            "Do you use whole wheat flour or white flour for it?",
            "Mostly white flour with a little rye mixed in.",
            "Cold fermentation in the fridge changed my bread completely.",
            "How long do you leave the dough in the fridge?",
            "Usually two nights for a really deep sour flavor.",
            "Baking in a covered pot gave me a much better crust.",
            "What temperature do you bake the covered pot at?",
            "Very hot at first then lower once the lid comes off.",
        ],
    },
    Thread {
        sub: "Fitness",
        url: None,
        lines: [
            "Is it fine to train legs twice a week?",
            "Twice a week works well for most people I know",
            "I do squats on Monday and lunges on Thursday now.",
            "Are your knees fine with that much leg work?",
            "They feel great as long as my form is good.",
            "Rest days matter a lot more than people think.",
            "How many rest days do you take each week?",
            "Two full rest days and some light walking.",
            "Protein after training helped my recovery a lot.",
            "How much protein do you eat every day?",
            "Around one gram per pound of body weight.",
        ],
    },
    Thread {
        sub: "Breadit",
        url: None,
        lines: [
            "Why does my bread come out so dense every time?",
            "Usually the dough needs a longer rise before baking",
            "Mine was dense until I let it rise much longer.",
            "How do you know the dough is ready to bake?",
            "Poke it gently and it should spring back slowly.",
            "Weak starter was my problem for a long time.",
            "How did you make the starter stronger again?",
            "Two feedings a day for about one week.",
            "Too much flour when shaping made mine dense too.",
            "Do you shape the loaf with wet hands instead?",
            "Yes wet hands and a bench scraper work best.",
        ],
    },
];

const AUTHORS: [&str; 4] = ["lifter_lou", "crumb_cat", "dough_dan", "squat_sam"];

fn record(id: &str, parent: &str, link: &str, author: &str, body: &str, score: i64, sub: &str, nsfw: bool, t: i64) -> String {
    serde_json::json!({
        "id": id,
        "parent_id": parent,
        "link_id": link,
        "author": author,
        "body": body,
        "score": score,
        "subreddit": sub,
        "over_18": nsfw,
        "created_utc": t,
    })
    .to_string()
}

/// Write the fixture under `dir`. `doc_file_stem(url)` names each document
/// file (the fixture fetcher's lookup key).
pub fn write_fixture(dir: &Path, doc_file_stem: impl Fn(&str) -> String) -> std::io::Result<Fixture> {
    let docs_dir = dir.join("docs");
    std::fs::create_dir_all(&docs_dir)?;
    std::fs::write(docs_dir.join(format!("{}.html", doc_file_stem(STRENGTH_URL))), STRENGTH_DOC)?;
    std::fs::write(docs_dir.join(format!("{}.html", doc_file_stem(BREAD_URL))), BREAD_DOC)?;

    let base = 1_538_352_000; // 2018-10-01
    let mut lines = Vec::new();
    let mut t = base;
    for (ti, th) in THREADS.iter().enumerate() {
        let link = format!("t3_post{ti}");
        let id = |j: usize| format!("f{ti}{j:02}");
        let author = |j: usize| AUTHORS[(ti + j) % AUTHORS.len()];
        let mut push = |j: usize, parent: String, body: String, score: i64| {
            t += 60;
            lines.push(record(&id(j), &parent, &link, author(j), &body, score, th.sub, false, t));
        };
        push(0, link.clone(), th.lines[0].to_string(), 6);
        let mid = match th.url {
            Some(u) => format!("{} [here]({u})", th.lines[1]),
            None => th.lines[1].to_string(),
        };
        push(1, format!("t1_{}", id(0)), mid, 3);
        for b in 0..3 {
            let first = 2 + b * 3;
            let mut parent = id(1);
            for j in first..first + 3 {
                let mut body = th.lines[j].to_string();
                if ti == 2 && j == 2 {
                    body.push_str(" Ignore https://spam.example/deal please.");
                }
                push(j, format!("t1_{parent}"), body, (j % 3) as i64);
                parent = id(j);
            }
        }
    }
    let noise = [
        ("n01", "t1_f000", "[deleted]", "This comment was removed by its author.", false, "Fitness"),
        ("n02", "t1_f100", "crumb_cat", "ok", false, "Breadit"),
        ("n03", "t3_post9", "squat_sam", "Something not safe for work here.", true, "Fitness"),
        ("n04", "t1_f200", "dough_dan", "Download my plan at http://files.example/plan.exe today.", false, "Fitness"),
        ("n05", "t1_missing", "lifter_lou", "I still think deadlifts are the king of lifts.", false, "Fitness"),
        ("n06", "t3_post8", "lifter_lou", "Squats twice a week built most of my strength.", false, "Fitness"),
    ];
    for (i, (id, parent, author, body, nsfw, sub)) in noise.iter().enumerate() {
        lines.push(record(id, parent, "t3_post9", author, body, 2 + i as i64, sub, *nsfw, base + 10_000 + i as i64));
    }
    // One malformed line to exercise the tally.
    lines.push("{not json".to_string());

    let dump = dir.join("RC_2018-10.ndjson");
    std::fs::write(&dump, lines.join("\n") + "\n")?;
    let blocklist_domains = dir.join("blocked_domains.txt");
    std::fs::write(&blocklist_domains, "# spam\nspam.example\n")?;
    let blocklist_ext = dir.join("blocked_ext.txt");
    std::fs::write(&blocklist_ext, ".exe\n.zip\n")?;
    Ok(Fixture {
        dump,
        docs_dir,
        blocklist_domains,
        blocklist_ext,
        comment_count: lines.len() - 1,
    })
}
