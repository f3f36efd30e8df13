//! Minimal PNG output for visual inspection of company images.
//!
//! Writes 8-bit RGB, no alpha, no interlace, with the zlib stream stored
//! uncompressed, so identical pixels always produce identical bytes. The
//! reader handles exactly this subset (plus multi-IDAT concatenation and
//! other stored-block layouts) and exists for round-trip checks; training
//! reads the raw dumps, never PNGs.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{Rgb, IMAGE_SIDE};

const SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

fn crc32_table() -> [u32; 256] {
    let mut table = [0u32; 256];
    for (n, slot) in table.iter_mut().enumerate() {
        let mut c = n as u32;
        for _ in 0..8 {
            c = if c & 1 != 0 { 0xedb8_8320 ^ (c >> 1) } else { c >> 1 };
        }
        *slot = c;
    }
    table
}

fn crc32(data: &[u8]) -> u32 {
    let table = crc32_table();
    let mut c = 0xffff_ffffu32;
    for &b in data {
        c = table[((c ^ u32::from(b)) & 0xff) as usize] ^ (c >> 8);
    }
    c ^ 0xffff_ffff
}

fn adler32(data: &[u8]) -> u32 {
    const MOD: u32 = 65_521;
    let mut a = 1u32;
    let mut b = 0u32;
    for &byte in data {
        a = (a + u32::from(byte)) % MOD;
        b = (b + a) % MOD;
    }
    (b << 16) | a
}

fn push_chunk(out: &mut Vec<u8>, kind: &[u8; 4], payload: &[u8]) {
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    let start = out.len();
    out.extend_from_slice(kind);
    out.extend_from_slice(payload);
    let crc = crc32(&out[start..]);
    out.extend_from_slice(&crc.to_be_bytes());
}

/// Zlib container with a single stored (uncompressed) deflate block.
fn zlib_stored(raw: &[u8]) -> Vec<u8> {
    assert!(raw.len() <= 0xffff, "one stored block is enough at 24x24");
    let mut out = vec![0x78, 0x01];
    let len = raw.len() as u16;
    out.push(0b0000_0001); // final block, stored
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&(!len).to_le_bytes());
    out.extend_from_slice(raw);
    out.extend_from_slice(&adler32(raw).to_be_bytes());
    out
}

/// Encode a 24×24 pixel grid as PNG bytes.
pub fn encode_png(pixels: &[[Rgb; IMAGE_SIDE]; IMAGE_SIDE]) -> Vec<u8> {
    // Scanlines: filter byte 0 then 72 bytes of RGB.
    let mut raw = Vec::with_capacity(IMAGE_SIDE * (1 + IMAGE_SIDE * 3));
    for row in pixels {
        raw.push(0);
        for px in row {
            raw.extend_from_slice(px);
        }
    }
    let mut ihdr = Vec::with_capacity(13);
    ihdr.extend_from_slice(&(IMAGE_SIDE as u32).to_be_bytes());
    ihdr.extend_from_slice(&(IMAGE_SIDE as u32).to_be_bytes());
    ihdr.extend_from_slice(&[8, 2, 0, 0, 0]); // depth 8, color RGB, deflate, adaptive, no interlace

    let mut out = Vec::with_capacity(IMAGE_SIDE * IMAGE_SIDE * 3 + 128);
    out.extend_from_slice(&SIGNATURE);
    push_chunk(&mut out, b"IHDR", &ihdr);
    push_chunk(&mut out, b"IDAT", &zlib_stored(&raw));
    push_chunk(&mut out, b"IEND", &[]);
    out
}

pub fn write_png(pixels: &[[Rgb; IMAGE_SIDE]; IMAGE_SIDE], path: &Path) -> Result<()> {
    std::fs::write(path, encode_png(pixels))?;
    Ok(())
}

fn bad(msg: impl Into<String>) -> Error {
    Error::data("png", msg)
}

/// Inflate a zlib stream consisting of stored blocks only.
fn inflate_stored(data: &[u8]) -> Result<Vec<u8>> {
    if data.len() < 6 {
        return Err(bad("zlib stream too short"));
    }
    if data[0] & 0x0f != 8 {
        return Err(bad("not a deflate stream"));
    }
    let mut out = Vec::new();
    let mut i = 2;
    loop {
        if i + 5 > data.len() {
            return Err(bad("truncated deflate block header"));
        }
        let header = data[i];
        if header & 0b110 != 0 {
            return Err(bad("reader supports stored deflate blocks only"));
        }
        let len = u16::from_le_bytes([data[i + 1], data[i + 2]]) as usize;
        let nlen = u16::from_le_bytes([data[i + 3], data[i + 4]]);
        if nlen != !(len as u16) {
            return Err(bad("stored block length check failed"));
        }
        i += 5;
        if i + len > data.len() {
            return Err(bad("truncated stored block"));
        }
        out.extend_from_slice(&data[i..i + len]);
        i += len;
        if header & 1 != 0 {
            break;
        }
    }
    if i + 4 > data.len() {
        return Err(bad("missing adler32 checksum"));
    }
    let expected = u32::from_be_bytes([data[i], data[i + 1], data[i + 2], data[i + 3]]);
    if adler32(&out) != expected {
        return Err(bad("adler32 mismatch"));
    }
    Ok(out)
}

/// Decode PNG bytes produced by [`encode_png`] back into the pixel grid.
pub fn decode_png(bytes: &[u8]) -> Result<[[Rgb; IMAGE_SIDE]; IMAGE_SIDE]> {
    if bytes.len() < 8 || bytes[..8] != SIGNATURE {
        return Err(bad("missing PNG signature"));
    }
    let mut i = 8;
    let mut idat = Vec::new();
    let mut saw_ihdr = false;
    while i + 8 <= bytes.len() {
        let len = u32::from_be_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        let kind = &bytes[i + 4..i + 8];
        if i + 8 + len + 4 > bytes.len() {
            return Err(bad("truncated chunk"));
        }
        let payload = &bytes[i + 8..i + 8 + len];
        let stored_crc =
            u32::from_be_bytes(bytes[i + 8 + len..i + 12 + len].try_into().unwrap());
        if crc32(&bytes[i + 4..i + 8 + len]) != stored_crc {
            return Err(bad("chunk crc mismatch"));
        }
        match kind {
            b"IHDR" => {
                if payload.len() != 13 {
                    return Err(bad("bad IHDR length"));
                }
                let w = u32::from_be_bytes(payload[0..4].try_into().unwrap());
                let h = u32::from_be_bytes(payload[4..8].try_into().unwrap());
                if (w, h) != (IMAGE_SIDE as u32, IMAGE_SIDE as u32) {
                    return Err(bad(format!("expected 24x24, got {w}x{h}")));
                }
                if payload[8..13] != [8, 2, 0, 0, 0] {
                    return Err(bad("reader supports 8-bit RGB, no interlace only"));
                }
                saw_ihdr = true;
            }
            b"IDAT" => idat.extend_from_slice(payload),
            b"IEND" => break,
            _ => {} // ancillary chunks ignored
        }
        i += 12 + len;
    }
    if !saw_ihdr {
        return Err(bad("missing IHDR"));
    }
    let raw = inflate_stored(&idat)?;
    let stride = 1 + IMAGE_SIDE * 3;
    if raw.len() != IMAGE_SIDE * stride {
        return Err(bad(format!("scanline data is {} bytes", raw.len())));
    }
    let mut pixels = [[[0u8; 3]; IMAGE_SIDE]; IMAGE_SIDE];
    for (r, line) in raw.chunks_exact(stride).enumerate() {
        if line[0] != 0 {
            return Err(bad("reader supports filter 0 scanlines only"));
        }
        for (c, px) in line[1..].chunks_exact(3).enumerate() {
            pixels[r][c].copy_from_slice(px);
        }
    }
    Ok(pixels)
}

pub fn read_png(path: &Path) -> Result<[[Rgb; IMAGE_SIDE]; IMAGE_SIDE]> {
    decode_png(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient() -> [[Rgb; IMAGE_SIDE]; IMAGE_SIDE] {
        let mut pixels = [[[0u8; 3]; IMAGE_SIDE]; IMAGE_SIDE];
        for (r, row) in pixels.iter_mut().enumerate() {
            for (c, px) in row.iter_mut().enumerate() {
                *px = [(r * 10) as u8, (c * 10) as u8, ((r + c) * 5) as u8];
            }
        }
        pixels
    }

    #[test]
    fn encode_decode_round_trip() {
        let pixels = gradient();
        let bytes = encode_png(&pixels);
        assert_eq!(decode_png(&bytes).unwrap(), pixels);
    }

    #[test]
    fn identical_pixels_give_identical_bytes() {
        let pixels = gradient();
        assert_eq!(encode_png(&pixels), encode_png(&pixels));
    }

    #[test]
    fn all_black_round_trip() {
        let pixels = [[[0u8; 3]; IMAGE_SIDE]; IMAGE_SIDE];
        let back = decode_png(&encode_png(&pixels)).unwrap();
        assert!(back.iter().flatten().all(|px| *px == [0, 0, 0]));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let pixels = gradient();
        write_png(&pixels, &path).unwrap();
        assert_eq!(read_png(&path).unwrap(), pixels);
    }

    #[test]
    fn corrupted_bytes_are_rejected() {
        let mut bytes = encode_png(&gradient());
        assert!(decode_png(&bytes[..20]).is_err());
        let last_crc_byte = bytes.len() - 5 - 8; // inside IDAT payload
        bytes[last_crc_byte] ^= 0xff;
        assert!(decode_png(&bytes).is_err());
    }

    // Known-good reference values for the checksum primitives.
    #[test]
    fn checksum_vectors() {
        assert_eq!(crc32(b"123456789"), 0xcbf4_3926);
        assert_eq!(adler32(b"Wikipedia"), 0x11e6_0398);
    }
}
