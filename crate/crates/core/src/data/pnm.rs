//! Binary PPM (P6) and PGM (P5) with maxval 255.

/// Raster decoded from a PNM file: `channels` is 3 for P6, 1 for P5.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub pixels: Vec<u8>,
}

pub(crate) fn encode(width: usize, height: usize, channels: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height * channels);
    let magic = if channels == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

pub(crate) fn decode(bytes: &[u8]) -> Result<Raster, String> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| "non-ascii header")?);
    }
    // Exactly one whitespace byte separates the header from the payload.
    pos += 1;
    let channels = match fields[0] {
        "P6" => 3,
        "P5" => 1,
        other => return Err(format!("unsupported magic {other}")),
    };
    let num = |s: &str| s.parse::<usize>().map_err(|_| format!("bad header number {s:?}"));
    let (width, height, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval != 255 {
        return Err(format!("maxval {maxval}, expected 255"));
    }
    let len = width * height * channels;
    if bytes.len() < pos || bytes.len() - pos != len {
        return Err(format!("payload is {} bytes, expected {len}", bytes.len().saturating_sub(pos)));
    }
    Ok(Raster { width, height, channels, pixels: bytes[pos..].to_vec() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_gray_and_color() {
        let gray: Vec<u8> = (0..12).map(|i| (i * 20) as u8).collect();
        let r = decode(&encode(4, 3, 1, &gray)).unwrap();
        assert_eq!((r.width, r.height, r.channels), (4, 3, 1));
        assert_eq!(r.pixels, gray);
        // A payload starting with a whitespace byte must survive.
        let color: Vec<u8> = vec![b'\n', 32, 9, 255, 0, 1];
        let r = decode(&encode(2, 1, 3, &color)).unwrap();
        assert_eq!(r.pixels, color);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[7, 9]);
        assert_eq!(decode(&bytes).unwrap().pixels, vec![7, 9]);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(decode(b"P3\n1 1\n255\n0 0 0").is_err());
        assert!(decode(b"P5\n2 2\n255\n\x01").is_err());
        assert!(decode(b"P5\n1 1\n65535\n\x00\x00").is_err());
        assert!(decode(b"P5\n").is_err());
    }
}
