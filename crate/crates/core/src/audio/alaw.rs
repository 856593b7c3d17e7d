//! ITU-T G.711 A-law companding.
//!
//! Bit-compatible with the G.191 reference implementation: input is a
//! 16-bit left-justified linear sample of which the 13 most significant bits
//! are used, negative values are mapped through one's complement, and the
//! even bits of the code are inverted (`^ 0x55`).

/// Encodes a 16-bit linear sample to an 8-bit A-law code.
pub fn encode(x: i16) -> u8 {
    // One's complement folds -1..-16 onto the same magnitude bin as 0..15.
    let mut ix: i32 = if x < 0 { (!x as i32) >> 4 } else { x as i32 >> 4 };

    if ix > 15 {
        let mut exp = 1;
        while ix > 16 + 15 {
            ix >>= 1;
            exp += 1;
        }
        ix -= 16;
        ix += exp << 4;
    }
    if x >= 0 {
        ix |= 0x80;
    }
    ((ix ^ 0x55) & 0xff) as u8
}

/// Decodes an A-law code to the mid-point of its quantization interval,
/// on the 16-bit linear scale.
pub fn decode(code: u8) -> i16 {
    let ix = (code ^ 0x55) & 0x7f;
    let exp = ix >> 4;
    let mut mant = (ix & 0x0f) as i16;
    if exp > 0 {
        mant += 16;
    }
    mant = (mant << 4) + 8;
    if exp > 1 {
        mant <<= exp - 1;
    }
    if code & 0x80 != 0 {
        mant
    } else {
        -mant
    }
}

/// Quantization step (16-bit scale) of the segment that `code` belongs to.
pub fn step_size(code: u8) -> i32 {
    let exp = ((code ^ 0x55) & 0x7f) >> 4;
    if exp <= 1 {
        16
    } else {
        16 << (exp - 1)
    }
}
