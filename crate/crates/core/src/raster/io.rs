//! Raster file formats.
//!
//! Grids use ESRI ASCII Grid (`.asc`): a six-key header followed by one
//! text line per row. Values are written in shortest round-trip decimal
//! form, so a write/read cycle is lossless.
//!
//! Masks use binary PGM (`P5`, maxval 255): 0 is background, 255 is scar.
//! The cell size is carried in a `# cellsize <m>` comment line; readers
//! treat any nonzero sample as scar.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Location, Result};

use super::{BinaryMask, GeoGrid, GridTemplate, DEFAULT_NODATA};

pub fn read_grid(path: impl AsRef<Path>) -> Result<GeoGrid> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode_grid(&bytes)
}

pub fn write_grid(grid: &GeoGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_grid(grid)?;
    fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode_mask(&bytes)
}

pub fn write_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_mask(mask)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn encode_grid(grid: &GeoGrid) -> Result<Vec<u8>> {
    let t = grid.template();
    let nodata = grid.nodata_value();
    let mut out = String::with_capacity(t.len() * 8 + 128);
    let _ = writeln!(out, "ncols {}", t.width);
    let _ = writeln!(out, "nrows {}", t.height);
    let _ = writeln!(out, "xllcorner {}", t.origin_x);
    let _ = writeln!(out, "yllcorner {}", t.origin_y - t.height as f64 * t.cell_size);
    let _ = writeln!(out, "cellsize {}", t.cell_size);
    let _ = writeln!(out, "NODATA_value {}", nodata);
    for (row, line) in grid.values().chunks(t.width).enumerate() {
        for (col, v) in line.iter().enumerate() {
            if col > 0 {
                out.push(' ');
            }
            if v.is_nan() {
                let _ = write!(out, "{nodata}");
            } else if *v == nodata {
                return Err(Error::Argument(format!(
                    "value at row {row}, col {col} equals the NODATA sentinel {nodata}"
                )));
            } else {
                let _ = write!(out, "{v}");
            }
        }
        out.push('\n');
    }
    Ok(out.into_bytes())
}

#[derive(Default)]
struct AscHeader {
    ncols: Option<usize>,
    nrows: Option<usize>,
    x: Option<(f64, bool)>,
    y: Option<(f64, bool)>,
    cellsize: Option<f64>,
    nodata: Option<f64>,
}

pub fn decode_grid(bytes: &[u8]) -> Result<GeoGrid> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::format(Location::Byte(e.valid_up_to()), "not UTF-8"))?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).peekable();
    let mut header = AscHeader::default();

    while let Some(&(line_no, line)) = lines.peek() {
        let mut tokens = line.split_whitespace();
        let Some(key) = tokens.next() else {
            lines.next();
            continue;
        };
        if key.parse::<f64>().is_ok() {
            break;
        }
        lines.next();
        let value = tokens
            .next()
            .ok_or_else(|| Error::format(Location::Line(line_no), format!("header key {key} has no value")))?;
        if tokens.next().is_some() {
            return Err(Error::format(Location::Line(line_no), "trailing tokens in header line"));
        }
        let num = |v: &str| -> Result<f64> {
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::format(Location::Line(line_no), format!("{key}: invalid number {v:?}")))
        };
        let int = |v: &str| -> Result<usize> {
            v.parse::<usize>()
                .map_err(|_| Error::format(Location::Line(line_no), format!("{key}: invalid count {v:?}")))
        };
        match key.to_ascii_lowercase().as_str() {
            "ncols" => header.ncols = Some(int(value)?),
            "nrows" => header.nrows = Some(int(value)?),
            "xllcorner" => header.x = Some((num(value)?, false)),
            "xllcenter" => header.x = Some((num(value)?, true)),
            "yllcorner" => header.y = Some((num(value)?, false)),
            "yllcenter" => header.y = Some((num(value)?, true)),
            "cellsize" => header.cellsize = Some(num(value)?),
            "nodata_value" => header.nodata = Some(num(value)?),
            other => {
                return Err(Error::format(Location::Line(line_no), format!("unknown header key {other:?}")));
            }
        }
    }

    let first_data_line = lines.peek().map(|(n, _)| *n).unwrap_or(text.lines().count() + 1);
    let missing = |name: &str| Error::format(Location::Line(first_data_line), format!("header is missing {name}"));
    let width = header.ncols.ok_or_else(|| missing("ncols"))?;
    let height = header.nrows.ok_or_else(|| missing("nrows"))?;
    let cell_size = header.cellsize.ok_or_else(|| missing("cellsize"))?;
    let (x, x_center) = header.x.ok_or_else(|| missing("xllcorner"))?;
    let (y, y_center) = header.y.ok_or_else(|| missing("yllcorner"))?;
    let nodata = header.nodata.unwrap_or(DEFAULT_NODATA);
    let half = cell_size / 2.0;
    let origin_x = if x_center { x - half } else { x };
    let y_ll = if y_center { y - half } else { y };
    let template = GridTemplate::new(width, height, cell_size, origin_x, y_ll + height as f64 * cell_size)
        .map_err(|e| Error::format(Location::Line(first_data_line), e.to_string()))?;

    let mut values = Vec::with_capacity(template.len());
    let mut rows = 0;
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if rows == height {
            return Err(Error::format(
                Location::Line(line_no),
                format!("more than the {height} declared rows"),
            ));
        }
        let before = values.len();
        for token in line.split_whitespace() {
            let v: f64 = token
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::format(Location::Line(line_no), format!("invalid value {token:?}")))?;
            values.push(if v == nodata { f64::NAN } else { v });
        }
        let got = values.len() - before;
        if got != width {
            return Err(Error::format(
                Location::Line(line_no),
                format!("row {rows} has {got} values, header declares {width} columns"),
            ));
        }
        rows += 1;
    }
    if rows != height {
        return Err(Error::format(
            Location::Line(text.lines().count() + 1),
            format!("truncated: {rows} of {height} rows present"),
        ));
    }
    GeoGrid::new(template, values)?.with_nodata_value(nodata)
}

pub fn encode_mask(mask: &BinaryMask) -> Vec<u8> {
    let mut out = format!(
        "P5\n# cellsize {}\n{} {}\n255\n",
        mask.cell_size(),
        mask.width(),
        mask.height()
    )
    .into_bytes();
    out.extend(mask.bits().iter().map(|&b| if b { 255u8 } else { 0 }));
    out
}

/// Tokenizer over a netpbm header, tracking byte offsets and `#` comments.
struct PnmHeader<'a> {
    bytes: &'a [u8],
    pos: usize,
    comments: Vec<String>,
}

impl<'a> PnmHeader<'a> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    let start = self.pos + 1;
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                    self.comments
                        .push(String::from_utf8_lossy(&self.bytes[start..self.pos]).trim().to_string());
                }
                b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() && self.bytes[self.pos] != b'#' {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format(Location::Byte(start), format!("expected {what}")));
        }
        let s = std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::format(Location::Byte(start), format!("invalid {what}")))?;
        Ok((start, s))
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let (at, s) = self.token(what)?;
        s.parse()
            .map_err(|_| Error::format(Location::Byte(at), format!("invalid {what} {s:?}")))
    }
}

struct GrayImage<'a> {
    width: usize,
    height: usize,
    comments: Vec<String>,
    pixels: &'a [u8],
}

fn decode_pgm(bytes: &[u8]) -> Result<GrayImage<'_>> {
    let mut h = PnmHeader {
        bytes,
        pos: 0,
        comments: Vec::new(),
    };
    let (_, magic) = h.token("magic number")?;
    if magic != "P5" {
        return Err(Error::format(Location::Byte(0), format!("expected P5, found {magic:?}")));
    }
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if !(1..=255).contains(&maxval) {
        return Err(Error::format(Location::Byte(h.pos), format!("unsupported maxval {maxval}")));
    }
    if h.pos >= bytes.len() || !bytes[h.pos].is_ascii_whitespace() {
        return Err(Error::format(Location::Byte(h.pos), "missing separator before raster"));
    }
    let start = h.pos + 1;
    let expected = width * height;
    let available = bytes.len() - start;
    if available < expected {
        return Err(Error::format(
            Location::Byte(bytes.len()),
            format!("truncated raster: {available} of {expected} bytes"),
        ));
    }
    if available > expected {
        return Err(Error::format(
            Location::Byte(start + expected),
            format!("{} unexpected trailing bytes", available - expected),
        ));
    }
    Ok(GrayImage {
        width,
        height,
        comments: h.comments,
        pixels: &bytes[start..],
    })
}

pub fn decode_mask(bytes: &[u8]) -> Result<BinaryMask> {
    let img = decode_pgm(bytes)?;
    let mut cell_size = 1.0;
    for c in &img.comments {
        if let Some(v) = c.strip_prefix("cellsize") {
            cell_size = v
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v > 0.0)
                .ok_or_else(|| Error::format(Location::Byte(0), format!("invalid cellsize comment {c:?}")))?;
        }
    }
    BinaryMask::from_bits(img.width, img.height, cell_size, img.pixels.iter().map(|&p| p != 0).collect())
        .map_err(|e| Error::format(Location::Byte(0), e.to_string()))
}

/// 8-bit grayscale PGM (P5) bytes.
pub fn encode_gray_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// 8-bit grayscale PNG bytes.
pub fn encode_gray_png(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, width as u32, height as u32);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder
            .write_header()
            .map_err(|e| Error::io("encoding PNG", std::io::Error::other(e)))?;
        writer
            .write_image_data(pixels)
            .map_err(|e| Error::io("encoding PNG", std::io::Error::other(e)))?;
    }
    Ok(out)
}

/// Decodes an 8-bit grayscale PGM into `(width, height, pixels)`.
pub fn decode_gray_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let img = decode_pgm(bytes)?;
    Ok((img.width, img.height, img.pixels.to_vec()))
}
