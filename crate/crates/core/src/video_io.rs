//! Luma planes and the file formats used to move them around: YUV4MPEG2,
//! raw planar YUV and binary PGM.
//!
//! Only the luma raster is kept. Chroma payload is parsed for its size and
//! skipped.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A single 8-bit luma raster in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimensions(format!("empty plane {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::Dimensions(format!(
                "{} samples for a {width}x{height} plane",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "empty plane");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0, "empty plane");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    /// Sample with edge replication for coordinates outside the raster.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> u8 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    pub fn same_dimensions(&self, other: &Plane) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Frame rate as the rational carried in the Y4M `F` token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRate {
    pub num: u32,
    pub den: u32,
}

impl FrameRate {
    pub const fn new(num: u32, den: u32) -> Self {
        Self { num, den }
    }

    pub fn fps(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl Default for FrameRate {
    fn default() -> Self {
        Self::new(30, 1)
    }
}

/// An ordered list of equally sized luma frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sequence {
    frames: Vec<Plane>,
    frame_rate: FrameRate,
}

impl Sequence {
    pub fn new(frames: Vec<Plane>, frame_rate: FrameRate) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::Dimensions("sequence without frames".into()));
        };
        if let Some((i, _)) = frames
            .iter()
            .enumerate()
            .find(|(_, f)| !f.same_dimensions(first))
        {
            return Err(Error::Dimensions(format!(
                "frame {i} differs from {}x{}",
                first.width, first.height
            )));
        }
        if frame_rate.num == 0 || frame_rate.den == 0 {
            return Err(Error::Config("frame rate must be positive".into()));
        }
        Ok(Self { frames, frame_rate })
    }

    pub fn frames(&self) -> &[Plane] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Plane> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    pub fn frame_rate(&self) -> FrameRate {
        self.frame_rate
    }
}

/// Chroma layout of an input file. Only used to size the skipped payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subsampling {
    Yuv420,
    Yuv422,
    Yuv444,
    Mono,
}

impl Subsampling {
    pub fn chroma_bytes(self, width: usize, height: usize) -> usize {
        match self {
            Subsampling::Yuv420 => 2 * width.div_ceil(2) * height.div_ceil(2),
            Subsampling::Yuv422 => 2 * width.div_ceil(2) * height,
            Subsampling::Yuv444 => 2 * width * height,
            Subsampling::Mono => 0,
        }
    }

    pub fn frame_bytes(self, width: usize, height: usize) -> usize {
        width * height + self.chroma_bytes(width, height)
    }

    fn from_y4m_token(tok: &str) -> Option<Self> {
        match tok {
            "mono" => Some(Subsampling::Mono),
            t if t.starts_with("420") => Some(Subsampling::Yuv420),
            "422" => Some(Subsampling::Yuv422),
            "444" => Some(Subsampling::Yuv444),
            _ => None,
        }
    }
}

const Y4M_MAGIC: &[u8] = b"YUV4MPEG2";

fn split_line(bytes: &[u8], pos: usize) -> Option<(&[u8], usize)> {
    let rest = bytes.get(pos..)?;
    let end = rest.iter().position(|&b| b == b'\n')?;
    Some((&rest[..end], pos + end + 1))
}

/// Parses a YUV4MPEG2 stream and keeps the luma planes.
pub fn read_y4m(bytes: &[u8]) -> Result<Sequence> {
    if !bytes.starts_with(Y4M_MAGIC) {
        return Err(Error::Y4m("missing YUV4MPEG2 signature".into()));
    }
    let (header, mut pos) =
        split_line(bytes, 0).ok_or_else(|| Error::Y4m("unterminated stream header".into()))?;
    let header = std::str::from_utf8(header).map_err(|_| Error::Y4m("non-ASCII header".into()))?;

    let mut width = None;
    let mut height = None;
    let mut rate = FrameRate::default();
    let mut subsampling = Subsampling::Yuv420;
    for tok in header.split(' ').skip(1).filter(|t| !t.is_empty()) {
        let (key, val) = tok.split_at(1);
        match key {
            "W" => width = Some(parse_dim(val, "W")?),
            "H" => height = Some(parse_dim(val, "H")?),
            "F" => {
                let (n, d) = val
                    .split_once(':')
                    .ok_or_else(|| Error::Y4m(format!("bad frame rate token {tok}")))?;
                let num = n.parse().map_err(|_| Error::Y4m(format!("bad frame rate {tok}")))?;
                let den = d.parse().map_err(|_| Error::Y4m(format!("bad frame rate {tok}")))?;
                if num == 0 || den == 0 {
                    return Err(Error::Y4m(format!("bad frame rate {tok}")));
                }
                rate = FrameRate::new(num, den);
            }
            "C" => {
                subsampling = Subsampling::from_y4m_token(val)
                    .ok_or_else(|| Error::Y4m(format!("unsupported colour space {val}")))?;
            }
            // interlacing, aspect ratio and extensions don't affect the payload
            _ => {}
        }
    }
    let width = width.ok_or_else(|| Error::Y4m("missing W token".into()))?;
    let height = height.ok_or_else(|| Error::Y4m("missing H token".into()))?;
    let luma = width * height;
    let payload = subsampling.frame_bytes(width, height);

    let mut frames = Vec::new();
    while pos < bytes.len() {
        let (line, next) = split_line(bytes, pos)
            .ok_or_else(|| Error::Y4m(format!("unterminated header for frame {}", frames.len())))?;
        if !line.starts_with(b"FRAME") {
            return Err(Error::Y4m(format!("expected FRAME marker for frame {}", frames.len())));
        }
        let available = bytes.len() - next;
        if available < payload {
            return Err(Error::Truncated {
                frame: frames.len(),
                needed: payload,
                available,
            });
        }
        frames.push(Plane::new(width, height, bytes[next..next + luma].to_vec())?);
        pos = next + payload;
    }
    Sequence::new(frames, rate)
}

fn parse_dim(val: &str, key: &str) -> Result<usize> {
    match val.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(Error::Y4m(format!("bad {key} token {val:?}"))),
    }
}

/// Reads headerless planar YUV (I420, or Y-only with [`Subsampling::Mono`]).
pub fn read_raw_yuv(
    bytes: &[u8],
    width: usize,
    height: usize,
    subsampling: Subsampling,
) -> Result<Sequence> {
    if width == 0 || height == 0 {
        return Err(Error::Dimensions(format!("empty frame {width}x{height}")));
    }
    let frame_size = subsampling.frame_bytes(width, height);
    if bytes.is_empty() || bytes.len() % frame_size != 0 {
        return Err(Error::RawSize {
            len: bytes.len(),
            frame_size,
        });
    }
    let frames = bytes
        .chunks_exact(frame_size)
        .map(|chunk| Plane::new(width, height, chunk[..width * height].to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Sequence::new(frames, FrameRate::default())
}

/// Serialises a sequence as mono YUV4MPEG2.
pub fn write_y4m(seq: &Sequence) -> Vec<u8> {
    let header = format!(
        "YUV4MPEG2 W{} H{} F{}:{} Ip A1:1 Cmono\n",
        seq.width(),
        seq.height(),
        seq.frame_rate.num,
        seq.frame_rate.den
    );
    let mut out = Vec::with_capacity(header.len() + seq.len() * (6 + seq.width() * seq.height()));
    out.extend_from_slice(header.as_bytes());
    for frame in &seq.frames {
        out.extend_from_slice(b"FRAME\n");
        out.extend_from_slice(&frame.data);
    }
    out
}

/// Binary PGM, maxval 255.
pub fn write_pgm(plane: &Plane) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", plane.width, plane.height).into_bytes();
    out.extend_from_slice(&plane.data);
    out
}

/// Reads a binary (P5) PGM with maxval 255. Header comments are skipped.
pub fn read_pgm(bytes: &[u8]) -> Result<Plane> {
    if !bytes.starts_with(b"P5") {
        return Err(Error::Pgm("missing P5 signature".into()));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::Pgm("truncated header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Pgm("bad header field".into()))?;
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(Error::Pgm("missing raster separator".into()));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::Pgm(format!("unsupported maxval {maxval}")));
    }
    let len = width * height;
    let raster = bytes
        .get(pos..pos + len)
        .ok_or_else(|| Error::Pgm("truncated raster".into()))?;
    Plane::new(width, height, raster.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_mono_y4m() {
        let mut bytes = b"YUV4MPEG2 W4 H4 F30:1 Cmono\n".to_vec();
        for _ in 0..2 {
            bytes.extend_from_slice(b"FRAME\n");
            bytes.extend_from_slice(&[0u8; 16]);
        }
        let seq = read_y4m(&bytes).unwrap();
        assert_eq!(seq.len(), 2);
        for f in seq.frames() {
            assert_eq!((f.width(), f.height()), (4, 4));
            assert!(f.data().iter().all(|&v| v == 0));
        }
    }

    #[test]
    fn cif_420_header_skips_chroma() {
        let (w, h) = (352usize, 288usize);
        let mut bytes = format!("YUV4MPEG2 W{w} H{h} F30:1 Ip A0:0 C420jpeg\n").into_bytes();
        for _ in 0..2 {
            bytes.extend_from_slice(b"FRAME\n");
            bytes.extend(std::iter::repeat(7u8).take(w * h));
            bytes.extend(std::iter::repeat(128u8).take(w * h / 2));
        }
        let seq = read_y4m(&bytes).unwrap();
        assert_eq!(seq.len(), 2);
        assert_eq!((seq.width(), seq.height()), (352, 288));
        assert!(seq.frames()[1].data().iter().all(|&v| v == 7));
    }

    #[test]
    fn y4m_errors() {
        assert!(matches!(read_y4m(b"RIFF...."), Err(Error::Y4m(_))));
        assert!(matches!(read_y4m(b"YUV4MPEG2 H4 Cmono\n"), Err(Error::Y4m(_))));
        assert!(matches!(read_y4m(b"YUV4MPEG2 W4 Cmono\n"), Err(Error::Y4m(_))));
        assert!(matches!(read_y4m(b"YUV4MPEG2 W4 H4 Cmono"), Err(Error::Y4m(_))));
        let mut bytes = b"YUV4MPEG2 W4 H4 Cmono\nFRAME\n".to_vec();
        bytes.extend_from_slice(&[1u8; 10]);
        assert!(matches!(
            read_y4m(&bytes),
            Err(Error::Truncated {
                frame: 0,
                needed: 16,
                available: 10
            })
        ));
        // a header with no frames is not a sequence
        assert!(read_y4m(b"YUV4MPEG2 W4 H4 Cmono\n").is_err());
    }

    #[test]
    fn raw_yuv_frame_counting() {
        let one = vec![0u8; 384];
        assert_eq!(read_raw_yuv(&one, 16, 16, Subsampling::Yuv420).unwrap().len(), 1);
        let two = vec![0u8; 768];
        assert_eq!(read_raw_yuv(&two, 16, 16, Subsampling::Yuv420).unwrap().len(), 2);
        let bad = vec![0u8; 500];
        assert!(matches!(
            read_raw_yuv(&bad, 16, 16, Subsampling::Yuv420),
            Err(Error::RawSize { len: 500, frame_size: 384 })
        ));
        let y_only = vec![3u8; 512];
        assert_eq!(read_raw_yuv(&y_only, 16, 16, Subsampling::Mono).unwrap().len(), 2);
    }

    #[test]
    fn raw_yuv_takes_luma_in_file_order() {
        let mut bytes = vec![10u8; 256];
        bytes.extend(vec![99u8; 128]);
        bytes.extend(vec![20u8; 256]);
        bytes.extend(vec![99u8; 128]);
        let seq = read_raw_yuv(&bytes, 16, 16, Subsampling::Yuv420).unwrap();
        assert_eq!(seq.frames()[0].get(5, 5), 10);
        assert_eq!(seq.frames()[1].get(5, 5), 20);
    }

    #[test]
    fn smallest_pgm() {
        let p = Plane::filled(1, 1, 128);
        let mut expect = b"P5\n1 1\n255\n".to_vec();
        expect.push(0x80);
        assert_eq!(write_pgm(&p), expect);
        assert_eq!(read_pgm(&expect).unwrap(), p);
    }

    #[test]
    fn pgm_with_comment() {
        let bytes = b"P5\n# made by hand\n2 1\n255\n\x01\x02";
        let p = read_pgm(bytes).unwrap();
        assert_eq!(p.data(), &[1, 2]);
        assert!(read_pgm(b"P5\n2 1\n65535\n\x00\x00\x00\x00").is_err());
    }

    #[test]
    fn cif_mono_payload_size() {
        let frames = vec![Plane::filled(352, 288, 0); 99];
        let seq = Sequence::new(frames, FrameRate::default()).unwrap();
        let bytes = write_y4m(&seq);
        let header = b"YUV4MPEG2 W352 H288 F30:1 Ip A1:1 Cmono\n".len();
        assert_eq!(bytes.len() - header - 99 * b"FRAME\n".len(), 99 * 352 * 288);
    }

    #[test]
    fn sequence_rejects_mixed_sizes() {
        let frames = vec![Plane::filled(4, 4, 0), Plane::filled(4, 8, 0)];
        assert!(Sequence::new(frames, FrameRate::default()).is_err());
        assert!(Sequence::new(vec![], FrameRate::default()).is_err());
        assert!(Plane::new(2, 2, vec![0; 3]).is_err());
    }

    fn arb_sequence() -> impl Strategy<Value = Sequence> {
        (1usize..9, 1usize..9, 1usize..4, 1u32..61, 1u32..3).prop_flat_map(|(w, h, n, num, den)| {
            proptest::collection::vec(proptest::collection::vec(any::<u8>(), w * h), n).prop_map(
                move |frames| {
                    let planes = frames
                        .into_iter()
                        .map(|d| Plane::new(w, h, d).unwrap())
                        .collect();
                    Sequence::new(planes, FrameRate::new(num, den)).unwrap()
                },
            )
        })
    }

    proptest! {
        #[test]
        fn y4m_round_trip(seq in arb_sequence()) {
            let bytes = write_y4m(&seq);
            let back = read_y4m(&bytes).unwrap();
            prop_assert_eq!(&back, &seq);
            prop_assert_eq!(write_y4m(&back), bytes);
        }
    }
}
