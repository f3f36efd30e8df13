//! 24×24 RGB encoding of a company's trailing twelve months.
//!
//! Each month occupies two rows. Columns 0..3 are header pixels (sector and
//! state, period and country, inflation); columns 3..24 carry the 21 tracked
//! values. In the accounts variant the first row of a month holds the
//! vertical analysis and the second the horizontal analysis; in the ratios
//! variant both rows repeat the 21 ratios.
//!
//! Scalar values map to bytes around a baseline of 125 (zero) with a
//! square-root scale: `125 + sign(v)·√|v|·100`, integer part only, clamped to
//! the byte range. The positive edge saturates at |v| = 1.69 (byte 255); on
//! the negative side the byte floor 0 is reached at −1.5625 already, so more
//! negative values decode back to −1.5625.

pub mod png;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ledger::MonthlyVector;

pub const IMAGE_SIDE: usize = 24;
pub const IMAGE_BYTES: usize = IMAGE_SIDE * IMAGE_SIDE * 3;
/// Columns reserved for the three header pixels.
pub const HEADER_COLUMNS: usize = 3;
/// Pixel-scale baseline byte representing zero.
pub const BASELINE: u8 = 125;
/// Value magnitude at which the square-root coding reaches byte 255.
pub const SATURATION: f64 = 1.69;

pub type Rgb = [u8; 3];

/// Which data the rows carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageVariant {
    Accounts,
    Ratios,
}

impl ImageVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            ImageVariant::Accounts => "accounts",
            ImageVariant::Ratios => "ratios",
        }
    }
}

impl std::str::FromStr for ImageVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accounts" => Ok(ImageVariant::Accounts),
            "ratios" => Ok(ImageVariant::Ratios),
            other => Err(Error::invalid(format!(
                "unknown variant {other:?}, expected accounts or ratios"
            ))),
        }
    }
}

/// A labeled 24×24 RGB image for one company window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompanyImage {
    pub pixels: [[Rgb; IMAGE_SIDE]; IMAGE_SIDE],
    pub label: u8,
    pub company_id: String,
    pub anchor_period: crate::ledger::Period,
    pub variant: ImageVariant,
}

impl CompanyImage {
    /// Row-major RGB dump, 1728 bytes.
    pub fn to_raw(&self) -> [u8; IMAGE_BYTES] {
        let mut out = [0u8; IMAGE_BYTES];
        let mut i = 0;
        for row in &self.pixels {
            for px in row {
                out[i..i + 3].copy_from_slice(px);
                i += 3;
            }
        }
        out
    }

    pub fn pixels_from_raw(bytes: &[u8]) -> Result<[[Rgb; IMAGE_SIDE]; IMAGE_SIDE]> {
        if bytes.len() != IMAGE_BYTES {
            return Err(Error::contract(format!(
                "raw image must be {IMAGE_BYTES} bytes, got {}",
                bytes.len()
            )));
        }
        let mut pixels = [[[0u8; 3]; IMAGE_SIDE]; IMAGE_SIDE];
        let mut i = 0;
        for row in pixels.iter_mut() {
            for px in row.iter_mut() {
                px.copy_from_slice(&bytes[i..i + 3]);
                i += 3;
            }
        }
        Ok(pixels)
    }
}

/// Header pixel 1: economic sector and state.
///
/// `group` is the three-digit activity group whose leading digits must equal
/// `division`; only its last digit survives, scaled by ten.
pub fn encode_region_pixel(division: u8, group: u16, region_code: u8) -> Result<Rgb> {
    if group / 10 != u16::from(division) {
        return Err(Error::contract(format!(
            "group {group} does not belong to division {division}"
        )));
    }
    Ok([division, ((group % 10) * 10) as u8, region_code])
}

/// Header pixel 2: period and country. Years 1970..=2097 fit the byte range
/// as `(year − 1970)·2`; the month is scaled by ten.
pub fn encode_period_pixel(year: i32, month: u8, country_code: u8) -> Result<Rgb> {
    if !(1970..=2097).contains(&year) {
        return Err(Error::contract(format!("year {year} outside 1970..=2097")));
    }
    if !(1..=12).contains(&month) {
        return Err(Error::contract(format!("month {month} outside 1..=12")));
    }
    Ok([((year - 1970) * 2) as u8, month * 10, country_code])
}

/// Header pixel 3: inflation. The first channel is fixed at 100 marking the
/// index type; the others carry the monthly and twelve-month rates in the
/// square-root scale around the 125 baseline.
pub fn encode_inflation_pixel(month_rate: f64, year_rate: f64) -> Rgb {
    [100, encode_scalar(month_rate), encode_scalar(year_rate)]
}

/// Square-root byte coding of a scalar: `125 + sign(v)·√|v|·100`, integer
/// part, clamped to 0..=255. Non-finite input encodes as the baseline.
pub fn encode_scalar(v: f64) -> u8 {
    if !v.is_finite() {
        return BASELINE;
    }
    let coded = f64::from(BASELINE) + v.signum() * v.abs().sqrt() * 100.0;
    coded.floor().clamp(0.0, 255.0) as u8
}

/// Inverse of [`encode_scalar`] up to quantization:
/// `sign(c − 125)·((|c − 125|)/100)²`.
pub fn decode_scalar(c: u8) -> f64 {
    let centered = f64::from(c) - f64::from(BASELINE);
    centered.signum() * (centered.abs() / 100.0).powi(2)
}

fn data_pixel(v: Option<f64>) -> Rgb {
    let v = v.unwrap_or(0.0);
    let v = if v.is_finite() { v } else { 0.0 };
    let linear = (f64::from(BASELINE) + v * 100.0).floor().clamp(0.0, 255.0) as u8;
    let magnitude = (v.abs().sqrt() * 100.0).floor().clamp(0.0, 255.0) as u8;
    [encode_scalar(v), linear, magnitude]
}

/// Compose the image for a validated 12-month window, oldest month first.
pub fn compose_image(
    window: &[MonthlyVector],
    variant: ImageVariant,
    label: u8,
) -> Result<CompanyImage> {
    if window.len() != 12 {
        return Err(Error::contract(format!(
            "window must hold 12 months, got {}",
            window.len()
        )));
    }
    let mut pixels = [[[0u8; 3]; IMAGE_SIDE]; IMAGE_SIDE];
    for (m, vector) in window.iter().enumerate() {
        let header = [
            encode_region_pixel(vector.division, vector.group, vector.region_code)?,
            encode_period_pixel(vector.period.year, vector.period.month, vector.country_code)?,
            encode_inflation_pixel(vector.inflation_month, vector.inflation_12m),
        ];
        let (top, bottom): ([Rgb; 21], [Rgb; 21]) = match variant {
            ImageVariant::Accounts => (
                vector.vertical.map(|v| data_pixel(Some(v))),
                vector.horizontal.map(|v| data_pixel(Some(v))),
            ),
            ImageVariant::Ratios => {
                let row = vector.ratios.map(data_pixel);
                (row, row)
            }
        };
        for (row_offset, values) in [(0, top), (1, bottom)] {
            let row = &mut pixels[2 * m + row_offset];
            row[..HEADER_COLUMNS].copy_from_slice(&header);
            row[HEADER_COLUMNS..].copy_from_slice(&values);
        }
    }
    Ok(CompanyImage {
        pixels,
        label,
        company_id: window[0].company_id.clone(),
        anchor_period: window[11].period,
        variant,
    })
}
