use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder};
use scribseg::{BandWeights, BinaryMask, ChannelStack, Error};

pub(crate) fn png(pixels: &[u8], width: u32, height: u32, color: ExtendedColorType) -> Vec<u8> {
    let mut out = Vec::new();
    PngEncoder::new(&mut out)
        .write_image(pixels, width, height, color)
        .expect("buffer sized to the image");
    out
}

pub(crate) fn mask_png(mask: &BinaryMask) -> Vec<u8> {
    let (h, w) = mask.dims();
    let pixels: Vec<u8> = mask
        .data()
        .iter()
        .map(|&on| if on { 255 } else { 0 })
        .collect();
    png(&pixels, w, h, ExtendedColorType::L8)
}

/// Which channels a preview shows.
#[derive(Clone, Debug, PartialEq)]
pub(crate) enum BandSelection {
    /// One band as grayscale.
    Gray(u32),
    /// Three bands as R, G, B.
    Rgb([u32; 3]),
    /// Single-channel stacks as gray, three channels as is, otherwise the
    /// band-thirds RGB reconstruction.
    Auto,
}

impl BandSelection {
    pub fn parse(query: Option<&str>) -> Result<Self, Error> {
        let Some(q) = query.filter(|q| !q.is_empty()) else {
            return Ok(Self::Auto);
        };
        let bands = q
            .split(',')
            .map(|b| b.trim().parse::<u32>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| {
                Error::InvalidParameter(format!("bands must be 1 or 3 channel indices, got {q:?}"))
            })?;
        match bands[..] {
            [g] => Ok(Self::Gray(g)),
            [r, g, b] => Ok(Self::Rgb([r, g, b])),
            _ => Err(Error::InvalidParameter(format!(
                "bands must be 1 or 3 channel indices, got {q:?}"
            ))),
        }
    }
}

/// 8-bit preview PNG, min-max scaled jointly over the shown channels.
/// A constant image renders as 0.
pub(crate) fn preview_png(stack: &ChannelStack, bands: &BandSelection) -> Result<Vec<u8>, Error> {
    let c = stack.channels();
    let (h, w) = stack.dims();
    let check = |b: u32| {
        if b < c {
            Ok(b as usize)
        } else {
            Err(Error::InvalidParameter(format!(
                "band {b} out of range for {c} channels"
            )))
        }
    };
    let (values, color): (Vec<f32>, _) = match *bands {
        BandSelection::Gray(b) => {
            let b = check(b)?;
            (
                stack.spectra().map(|s| s[b]).collect(),
                ExtendedColorType::L8,
            )
        }
        BandSelection::Rgb(rgb) => {
            let idx = [check(rgb[0])?, check(rgb[1])?, check(rgb[2])?];
            (
                stack.spectra().flat_map(|s| idx.map(|i| s[i])).collect(),
                ExtendedColorType::Rgb8,
            )
        }
        BandSelection::Auto if c == 1 => (stack.data().to_vec(), ExtendedColorType::L8),
        BandSelection::Auto if c == 3 => (stack.data().to_vec(), ExtendedColorType::Rgb8),
        BandSelection::Auto => {
            let rgb = scribseg::rgb_reconstruct(stack, &BandWeights::band_thirds(c))?;
            (rgb.into_data(), ExtendedColorType::Rgb8)
        }
    };
    Ok(png(&to_u8(&values), w, h, color))
}

fn to_u8(values: &[f32]) -> Vec<u8> {
    let (lo, hi) = values
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if hi <= lo {
        return vec![0; values.len()];
    }
    let span = (hi - lo) as f64;
    values
        .iter()
        .map(|&v| ((v - lo) as f64 / span * 255.0).round() as u8)
        .collect()
}
