//! Printable rendering of byte tokens for the vocabulary files.
//!
//! Every byte maps to one unicode code point: printable bytes map to
//! themselves, the rest are shifted above 255 so token strings never contain
//! control characters or raw whitespace. The usual GPT-2 byte table.

fn is_directly_printable(b: u8) -> bool {
    (33..=126).contains(&b) || (161..=172).contains(&b) || (174..=255).contains(&b)
}

/// Render raw token bytes as a printable string.
pub fn render_bytes(bytes: &[u8]) -> String {
    let mut offset = 0u32;
    let mut table = [0u32; 256];
    for b in 0u16..=255 {
        let b = b as u8;
        table[b as usize] = if is_directly_printable(b) {
            b as u32
        } else {
            let c = 256 + offset;
            offset += 1;
            c
        };
    }
    bytes
        .iter()
        .map(|&b| char::from_u32(table[b as usize]).expect("valid code point"))
        .collect()
}

/// Invert [`render_bytes`]. Returns `None` on characters outside the table.
pub fn unrender_token(s: &str) -> Option<Vec<u8>> {
    let mut offset = 0u32;
    let mut inverse = std::collections::HashMap::new();
    for b in 0u16..=255 {
        let b = b as u8;
        let c = if is_directly_printable(b) {
            b as u32
        } else {
            let c = 256 + offset;
            offset += 1;
            c
        };
        inverse.insert(c, b);
    }
    s.chars()
        .map(|c| inverse.get(&(c as u32)).copied())
        .collect()
}
