// 3x5 bitmap digits, one row per entry, msb = leftmost column.
const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

pub(crate) const GLYPH_W: u32 = 3;
pub(crate) const GLYPH_H: u32 = 5;

/// Pixel offsets (column, row) lit by `text` at unit scale, with one column of spacing.
pub(crate) fn rasterize(text: &str) -> (u32, u32, Vec<(u32, u32)>) {
    let mut lit = Vec::new();
    let mut x0 = 0;
    for ch in text.chars() {
        if let Some(d) = ch.to_digit(10) {
            for (row, bits) in DIGITS[d as usize].iter().enumerate() {
                for col in 0..GLYPH_W {
                    if bits & (1 << (GLYPH_W - 1 - col)) != 0 {
                        lit.push((x0 + col, row as u32));
                    }
                }
            }
        }
        x0 += GLYPH_W + 1;
    }
    let width = x0.saturating_sub(1);
    (width, GLYPH_H, lit)
}
