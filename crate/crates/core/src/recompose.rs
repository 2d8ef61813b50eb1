//! Virtual backgrounds and mask compositing.

use serde::{Deserialize, Serialize};

use crate::backend::{EntityDescriptor, SegmentHandle};
use crate::error::{Error, Result};
use crate::init::SessionInit;
use crate::mask::{dilate, union_all, Frame, Mask};
use crate::tracker::TrackStatus;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackgroundKind {
    #[default]
    Black,
    Grid,
}

impl BackgroundKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackgroundKind::Black => "black",
            BackgroundKind::Grid => "grid",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackgroundSpec {
    pub kind: BackgroundKind,
    pub cell: u32,
    pub line_width: u32,
    /// Line colors, cycled per grid line.
    pub palette: Vec<[u8; 3]>,
    pub base: [u8; 3],
    /// Palette phase, taken modulo the palette length.
    pub seed: u64,
}

impl Default for BackgroundSpec {
    fn default() -> Self {
        Self {
            kind: BackgroundKind::Black,
            cell: 40,
            line_width: 2,
            palette: vec![[230, 60, 60], [60, 200, 80], [70, 110, 235], [235, 200, 50]],
            base: [0, 0, 0],
            seed: 0,
        }
    }
}

impl BackgroundSpec {
    pub fn black() -> Self {
        Self::default()
    }

    pub fn grid() -> Self {
        Self { kind: BackgroundKind::Grid, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.line_width < 1 || self.cell <= self.line_width {
            return Err(Error::Config(format!(
                "grid needs cell > line_width >= 1, got cell {} and line_width {}",
                self.cell, self.line_width
            )));
        }
        if self.palette.is_empty() {
            return Err(Error::Config("background palette is empty".into()));
        }
        Ok(())
    }
}

/// Render a background. Grid lines start at 0 and repeat every `cell`
/// pixels; vertical lines are drawn first, then horizontal ones, each
/// numbered from 0 in raster order to pick its palette color.
pub fn make_background(spec: &BackgroundSpec, width: u32, height: u32) -> Frame {
    let mut f = Frame::filled(width, height, spec.base);
    if spec.kind == BackgroundKind::Black || spec.palette.is_empty() || spec.cell == 0 {
        return f;
    }
    let n = spec.palette.len();
    let phase = (spec.seed % n as u64) as usize;
    let (cell, lw) = (spec.cell as i64, spec.line_width as i64);
    for (i, x) in (0..width as i64).step_by(cell as usize).enumerate() {
        f.fill_rect(x, 0, x + lw, height as i64, spec.palette[(phase + i) % n]);
    }
    for (j, y) in (0..height as i64).step_by(cell as usize).enumerate() {
        f.fill_rect(0, y, width as i64, y + lw, spec.palette[(phase + j) % n]);
    }
    f
}

/// Keep `frame` where `mask` is set and `background` elsewhere.
pub fn composite(frame: &Frame, mask: &Mask, background: &Frame) -> Result<Frame> {
    if mask.dims() != frame.dims() {
        return Err(Error::shape(frame.dims(), mask.dims()));
    }
    if background.dims() != frame.dims() {
        return Err(Error::shape(frame.dims(), background.dims()));
    }
    let mut out = background.pixels().to_vec();
    for ((dst, src), &bit) in out.chunks_exact_mut(3).zip(frame.pixels().chunks_exact(3)).zip(mask.bits()) {
        if bit != 0 {
            dst.copy_from_slice(src);
        }
    }
    Frame::new(frame.width(), frame.height(), out)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecomposeConfig {
    pub background: BackgroundSpec,
    /// Square dilation radius applied to the union mask.
    pub dilate: u32,
}

impl RecomposeConfig {
    pub fn validate(&self) -> Result<()> {
        self.background.validate()
    }
}

/// One recomposed frame with the masks behind it.
#[derive(Clone, Debug)]
pub struct MaskedFrame {
    pub image: Frame,
    pub union: Mask,
    pub entity_masks: Vec<Mask>,
    pub statuses: Vec<TrackStatus>,
}

/// Recomposes the frames of one stream, in order.
#[derive(Debug)]
pub struct MaskingSession {
    handle: SegmentHandle,
    config: RecomposeConfig,
    background: Frame,
    frames: u64,
}

impl MaskingSession {
    pub fn new(handle: SegmentHandle, config: RecomposeConfig) -> Result<Self> {
        config.validate()?;
        let (w, h) = handle.dims();
        let background = make_background(&config.background, w, h);
        Ok(Self { handle, config, background, frames: 0 })
    }

    /// Take over an initialized session and recompose its first frame
    /// from the masks initialization already produced.
    pub fn from_init(init: SessionInit, frame0: &Frame, config: RecomposeConfig) -> Result<(Self, MaskedFrame)> {
        let mut session = Self::new(init.handle, config)?;
        let statuses = session.handle.statuses();
        let out = session.recompose(frame0, init.first_masks, statuses)?;
        session.frames = 1;
        Ok((session, out))
    }

    pub fn entities(&self) -> &[EntityDescriptor] {
        self.handle.entities()
    }

    pub fn config(&self) -> &RecomposeConfig {
        &self.config
    }

    pub fn background(&self) -> &Frame {
        &self.background
    }

    pub fn frames(&self) -> u64 {
        self.frames
    }

    pub fn is_closed(&self) -> bool {
        self.handle.is_closed()
    }

    pub fn mask_frame(&mut self, frame: &Frame) -> Result<MaskedFrame> {
        if self.handle.is_closed() {
            return Err(Error::State("masking session is closed".into()));
        }
        let masks = self.handle.propagate(frame)?;
        let statuses = self.handle.statuses();
        let out = self.recompose(frame, masks, statuses)?;
        self.frames += 1;
        Ok(out)
    }

    fn recompose(&self, frame: &Frame, masks: Vec<Mask>, statuses: Vec<TrackStatus>) -> Result<MaskedFrame> {
        if frame.dims() != self.background.dims() {
            return Err(Error::shape(self.background.dims(), frame.dims()));
        }
        let mut union = union_all(frame.dims(), &masks)?;
        if self.config.dilate > 0 {
            union = dilate(&union, self.config.dilate);
        }
        let image = composite(frame, &union, &self.background)?;
        Ok(MaskedFrame { image, union, entity_masks: masks, statuses })
    }

    pub fn close(&mut self) -> Result<()> {
        self.handle.close()
    }
}

impl Drop for MaskingSession {
    fn drop(&mut self) {
        if !self.handle.is_closed() {
            if let Err(e) = self.handle.close() {
                tracing::warn!(error = %e, "closing segment handle on drop");
            }
        }
    }
}
