//! Reversible byte → printable-character table used by byte-level BPE.
//!
//! Bytes that are already printable (`!`..=`~`, `¡`..=`¬`, `®`..=`ÿ`) map to
//! themselves; the remaining 68 bytes map, in ascending byte order, onto
//! U+0100 upward. Base token ids follow the order of this table: the
//! printable ranges first, then the shifted bytes, which reproduces the
//! first 256 entries of the GPT-2 vocabulary.

use std::sync::LazyLock;

pub(crate) struct ByteTable {
    /// Characters in base-id order; `order[i]` is the symbol for base id `i`.
    pub order: Vec<(u8, char)>,
    pub encode: [char; 256],
    pub decode: std::collections::HashMap<char, u8>,
}

pub(crate) static BYTES: LazyLock<ByteTable> = LazyLock::new(|| {
    let mut printable: Vec<u8> = (b'!'..=b'~').collect();
    printable.extend(0xA1u8..=0xAC);
    printable.extend(0xAEu8..=0xFF);
    let mut order: Vec<(u8, char)> = printable.iter().map(|&b| (b, char::from(b))).collect();
    let mut shift = 0u32;
    for b in 0u8..=255 {
        if !printable.contains(&b) {
            order.push((b, char::from_u32(256 + shift).unwrap()));
            shift += 1;
        }
    }
    let mut encode = ['\0'; 256];
    for &(b, c) in &order {
        encode[b as usize] = c;
    }
    let decode = order.iter().map(|&(b, c)| (c, b)).collect();
    ByteTable { order, encode, decode }
});

pub(crate) fn to_symbols(text: &str) -> String {
    text.bytes().map(|b| BYTES.encode[b as usize]).collect()
}
