//! Layout and budget checks over type labels.

#[derive(Debug, Clone, Copy)]
pub struct Layout {
    pub total: usize,
    pub knowledge_max: usize,
    pub history_max: usize,
    pub conversation_min: usize,
}

impl Default for Layout {
    fn default() -> Self {
        Self {
            total: 1024,
            knowledge_max: 250,
            history_max: 250,
            conversation_min: 524,
        }
    }
}

pub struct Delimiters {
    pub bk: u32,
    pub ek: u32,
    pub bpd: u32,
    pub epd: u32,
}

/// `labels` are "K", "H", "S" or "L" per position.
pub fn violations(tokens: &[u32], labels: &[&str], available_conversation: usize, l: &Layout, d: &Delimiters) -> Vec<String> {
    let mut v = Vec::new();
    if tokens.len() != labels.len() {
        v.push(format!("{} tokens vs {} labels", tokens.len(), labels.len()));
        return v;
    }
    if tokens.len() > l.total {
        v.push(format!("length {} > {}", tokens.len(), l.total));
    }
    let count = |x: &str| labels.iter().filter(|&&t| t == x).count();
    let (k, h, conv) = (count("K"), count("H"), count("S") + count("L"));
    if k + h + conv != labels.len() {
        v.push("unknown type label".into());
    }
    if k > l.knowledge_max {
        v.push(format!("K {k} > {}", l.knowledge_max));
    }
    if h > l.history_max {
        v.push(format!("H {h} > {}", l.history_max));
    }
    let want = l.conversation_min.min(available_conversation);
    if conv < want {
        v.push(format!("conversation {conv} < {want}"));
    }
    // K block, then H block, then conversation.
    let expected: Vec<&str> = std::iter::repeat_n("K", k).chain(std::iter::repeat_n("H", h)).collect();
    if labels[..k + h] != expected[..] {
        v.push("segments not contiguous in K, H, conversation order".into());
    }
    if k > 0 && (k < 3 || tokens[0] != d.bk || tokens[k - 1] != d.ek) {
        v.push("K block not delimited".into());
    }
    if h > 0 && (h < 3 || tokens[k] != d.bpd || tokens[k + h - 1] != d.epd) {
        v.push("H block not delimited".into());
    }
    v
}
