//! Word-superimposed stimulus rendering.
//!
//! A word is drawn in a solid color over the picture with anti-aliasing
//! disabled: a pixel is painted iff its glyph coverage is at least 0.5.
//! Every pixel outside the painted bounding box is left bit-identical.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use ab_glyph::{Font, FontArc, PxScale, ScaleFont};
use image::{ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};

use crate::corpus::ConditionCode;
use crate::normalize_label;

/// Font shipped with the crate, used when no other font is configured.
pub const DEFAULT_FONT: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/assets/fonts/DejaVuSans-Bold.ttf");

const MIN_SIDE: u32 = 32;
const COVERAGE_THRESHOLD: f32 = 0.5;

#[derive(Debug, thiserror::Error)]
pub enum StimulusError {
    #[error("cannot decode image: {0}")]
    Decode(#[source] image::ImageError),
    #[error("cannot encode image: {0}")]
    Encode(#[source] image::ImageError),
    #[error("image is {width}x{height}, both sides must be at least {MIN_SIDE}")]
    TooSmall { width: u32, height: u32 },
    #[error("word is empty")]
    EmptyWord,
    #[error("font file {path}: {source}")]
    FontMissing {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("font file {0} is not a usable font")]
    FontInvalid(PathBuf),
    #[error("invalid render config: {0}")]
    InvalidConfig(String),
    #[error("word {0:?} cannot be fitted into the image")]
    DoesNotFit(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    #[default]
    Center,
    TopCenter,
    BottomCenter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub font_file: PathBuf,
    pub color: [u8; 3],
    /// Glyph box height limit as a fraction of the image height.
    pub rel_height: f64,
    pub anchor: Anchor,
    pub offset: (i32, i32),
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            font_file: PathBuf::from(DEFAULT_FONT),
            color: [255, 0, 0],
            rel_height: 0.10,
            anchor: Anchor::Center,
            offset: (0, 0),
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<(), StimulusError> {
        if !(self.rel_height > 0.0 && self.rel_height <= 1.0) {
            return Err(StimulusError::InvalidConfig(format!(
                "rel_height must be in (0, 1], got {}",
                self.rel_height
            )));
        }
        Ok(())
    }
}

/// One trial: an image, an optional superimposed word, and its condition.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StimulusSpec {
    pub image_id: String,
    /// `None` is the no-word control.
    pub word: Option<String>,
    pub condition: ConditionCode,
}

impl StimulusSpec {
    /// `<image_id>__<normalized_word|NOWORD>__<S-B>.png`
    pub fn file_name(&self) -> String {
        let word = match &self.word {
            Some(w) => normalize_label(w),
            None => "NOWORD".to_string(),
        };
        format!("{}__{}__{}.png", self.image_id, word, self.condition.file_code())
    }
}

/// Inclusive-exclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GlyphBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl GlyphBox {
    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

#[derive(Debug, Clone)]
pub struct Rendered {
    pub image: RgbImage,
    pub glyph_box: Option<GlyphBox>,
}

/// Binary glyph mask, tightly cropped to its painted pixels.
struct Mask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

/// Font-holding renderer. Cheap to clone and safe to share across threads.
#[derive(Clone)]
pub struct Renderer {
    font: FontArc,
    config: RenderConfig,
}

impl Renderer {
    pub fn new(config: RenderConfig) -> Result<Self, StimulusError> {
        config.validate()?;
        let bytes = std::fs::read(&config.font_file).map_err(|source| StimulusError::FontMissing {
            path: config.font_file.clone(),
            source,
        })?;
        let font = FontArc::try_from_vec(bytes).map_err(|_| StimulusError::FontInvalid(config.font_file.clone()))?;
        Ok(Renderer { font, config })
    }

    pub fn config(&self) -> &RenderConfig {
        &self.config
    }

    /// Render onto encoded image bytes, returning PNG bytes. An absent word
    /// returns the input bytes untouched.
    pub fn render_png(&self, image_bytes: &[u8], word: Option<&str>) -> Result<Vec<u8>, StimulusError> {
        let Some(word) = word else {
            return Ok(image_bytes.to_vec());
        };
        let img = decode_rgb(image_bytes)?;
        let out = self.render_rgb(&img, Some(word))?;
        encode_png(&out.image)
    }

    pub fn render_rgb(&self, img: &RgbImage, word: Option<&str>) -> Result<Rendered, StimulusError> {
        let (w, h) = img.dimensions();
        let Some(word) = word else {
            return Ok(Rendered {
                image: img.clone(),
                glyph_box: None,
            });
        };
        let word = word.trim();
        if word.is_empty() {
            return Err(StimulusError::EmptyWord);
        }
        if w < MIN_SIDE || h < MIN_SIDE {
            return Err(StimulusError::TooSmall { width: w, height: h });
        }
        let max_h = (self.config.rel_height * h as f64).ceil() as u32;
        let margin_x = w / 32;
        let max_w = w - 2 * margin_x;

        let mut scale = (self.config.rel_height * h as f64) as f32;
        let mask = loop {
            if scale < 1.0 {
                return Err(StimulusError::DoesNotFit(word.to_string()));
            }
            match self.rasterize(word, scale) {
                Some(m) if m.height <= max_h && m.width <= max_w => break m,
                Some(m) => {
                    let shrink = (max_h as f32 / m.height as f32).min(max_w as f32 / m.width as f32);
                    scale *= shrink.min(0.98);
                }
                // nothing painted (whitespace-only glyphs); treat as unfittable
                None => return Err(StimulusError::DoesNotFit(word.to_string())),
            }
        };

        let margin_y = h / 20;
        let (dx, dy) = self.config.offset;
        let x0 = (w - mask.width) as i64 / 2 + dx as i64;
        let y0 = match self.config.anchor {
            Anchor::Center => (h - mask.height) as i64 / 2,
            Anchor::TopCenter => margin_y as i64,
            Anchor::BottomCenter => (h - mask.height - margin_y) as i64,
        } + dy as i64;
        let x0 = x0.clamp(0, (w - mask.width) as i64) as u32;
        let y0 = y0.clamp(0, (h - mask.height) as i64) as u32;

        let mut out = img.clone();
        let color = image::Rgb(self.config.color);
        for my in 0..mask.height {
            for mx in 0..mask.width {
                if mask.bits[(my * mask.width + mx) as usize] {
                    out.put_pixel(x0 + mx, y0 + my, color);
                }
            }
        }
        Ok(Rendered {
            image: out,
            glyph_box: Some(GlyphBox {
                x0,
                y0,
                x1: x0 + mask.width,
                y1: y0 + mask.height,
            }),
        })
    }

    /// Lay out `word` on one baseline at pixel height `scale` and threshold
    /// the summed coverage. Returns `None` if no pixel is painted.
    fn rasterize(&self, word: &str, scale: f32) -> Option<Mask> {
        let px = PxScale::from(scale);
        let font = self.font.as_scaled(px);
        let mut caret = 0.0f32;
        let mut prev = None;
        let mut outlined = Vec::new();
        for c in word.chars() {
            let id = font.glyph_id(c);
            if let Some(p) = prev {
                caret += font.kern(p, id);
            }
            let glyph = id.with_scale_and_position(px, ab_glyph::point(caret, font.ascent()));
            caret += font.h_advance(id);
            prev = Some(id);
            if let Some(og) = self.font.outline_glyph(glyph) {
                outlined.push(og);
            }
        }
        if outlined.is_empty() {
            return None;
        }
        let (mut min_x, mut min_y, mut max_x, mut max_y) = (f32::MAX, f32::MAX, f32::MIN, f32::MIN);
        for og in &outlined {
            let b = og.px_bounds();
            min_x = min_x.min(b.min.x);
            min_y = min_y.min(b.min.y);
            max_x = max_x.max(b.max.x);
            max_y = max_y.max(b.max.y);
        }
        let cw = (max_x - min_x) as usize;
        let ch = (max_y - min_y) as usize;
        let mut coverage = vec![0.0f32; cw * ch];
        for og in &outlined {
            let b = og.px_bounds();
            let ox = (b.min.x - min_x) as usize;
            let oy = (b.min.y - min_y) as usize;
            og.draw(|x, y, c| {
                let (cx, cy) = (ox + x as usize, oy + y as usize);
                if cx < cw && cy < ch {
                    coverage[cy * cw + cx] += c;
                }
            });
        }

        let painted = |x: usize, y: usize| coverage[y * cw + x] >= COVERAGE_THRESHOLD;
        let (mut bx0, mut by0, mut bx1, mut by1) = (usize::MAX, usize::MAX, 0, 0);
        for y in 0..ch {
            for x in 0..cw {
                if painted(x, y) {
                    bx0 = bx0.min(x);
                    by0 = by0.min(y);
                    bx1 = bx1.max(x + 1);
                    by1 = by1.max(y + 1);
                }
            }
        }
        if bx0 == usize::MAX {
            return None;
        }
        let (width, height) = (bx1 - bx0, by1 - by0);
        let mut bits = Vec::with_capacity(width * height);
        for y in by0..by1 {
            for x in bx0..bx1 {
                bits.push(painted(x, y));
            }
        }
        Some(Mask {
            width: width as u32,
            height: height as u32,
            bits,
        })
    }
}

/// Render a single stimulus, loading the configured font for this call.
pub fn render(image_bytes: &[u8], word: Option<&str>, config: &RenderConfig) -> Result<Vec<u8>, StimulusError> {
    if word.is_none() {
        return Ok(image_bytes.to_vec());
    }
    Renderer::new(config.clone())?.render_png(image_bytes, word)
}

pub fn decode_rgb(bytes: &[u8]) -> Result<RgbImage, StimulusError> {
    let img = image::load_from_memory(bytes).map_err(StimulusError::Decode)?;
    Ok(img.to_rgb8())
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>, StimulusError> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png).map_err(StimulusError::Encode)?;
    Ok(buf.into_inner())
}

pub fn read_image(path: &Path) -> Result<Vec<u8>, std::io::Error> {
    std::fs::read(path)
}
