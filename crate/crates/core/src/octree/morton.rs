//! 64-bit Morton keys, 21 bits per axis; x occupies the lowest bit of each
//! triple.

pub const BITS_PER_AXIS: u32 = 21;
pub const AXIS_MASK: u32 = (1 << BITS_PER_AXIS) - 1;

fn spread(v: u32) -> u64 {
    let mut x = (v & AXIS_MASK) as u64;
    x = (x | (x << 32)) & 0x1f00000000ffff;
    x = (x | (x << 16)) & 0x1f0000ff0000ff;
    x = (x | (x << 8)) & 0x100f00f00f00f00f;
    x = (x | (x << 4)) & 0x10c30c30c30c30c3;
    x = (x | (x << 2)) & 0x1249249249249249;
    x
}

fn compact(v: u64) -> u32 {
    let mut x = v & 0x1249249249249249;
    x = (x | (x >> 2)) & 0x10c30c30c30c30c3;
    x = (x | (x >> 4)) & 0x100f00f00f00f00f;
    x = (x | (x >> 8)) & 0x1f0000ff0000ff;
    x = (x | (x >> 16)) & 0x1f00000000ffff;
    x = (x | (x >> 32)) & 0x1fffff;
    x as u32
}

pub fn encode(x: u32, y: u32, z: u32) -> u64 {
    spread(x) | (spread(y) << 1) | (spread(z) << 2)
}

pub fn decode(key: u64) -> (u32, u32, u32) {
    (compact(key), compact(key >> 1), compact(key >> 2))
}
