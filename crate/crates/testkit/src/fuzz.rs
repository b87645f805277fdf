use rand::Rng;

const PIECES: &[&str] = &[
    "a", "Z", "0", " ", "  ", "\n", "\t", "\r\n", "'s", "'ll", "!", "?", "...", "é", "ß", "中文", "日本", "🙂", "👍🏽", "e\u{301}",
    "\u{0}", "\u{7f}", "\u{FFFD}", "\u{200b}", "_", "__", "___", "bk", "__b", "k__", "eot", "__eot", "__ek__", "__bk__", "__bpd__",
    "__epd__", "__eot__", "http://x.example/a?b=c", "hello", " world", "naïve", "café", "1234", "$", "#", "\\", "\"", "<p>",
];

/// Random UTF-8 built from a mix of ASCII, whitespace, multibyte, combining
/// characters, special-token fragments, and arbitrary scalar values.
pub fn random_text<R: Rng>(rng: &mut R, max_pieces: usize) -> String {
    let n = rng.random_range(0..=max_pieces);
    let mut s = String::new();
    for _ in 0..n {
        if rng.random_bool(0.15) {
            let c = loop {
                if let Some(c) = char::from_u32(rng.random_range(0..0x11_0000)) {
                    break c;
                }
            };
            s.push(c);
        } else {
            s.push_str(PIECES[rng.random_range(0..PIECES.len())]);
        }
    }
    s
}
