//! Panel layout: pixel grid, unit cells, black masks and the electrode map.
//!
//! Coordinates are in micrometres with the origin at the top-left corner of
//! the active array; rows grow downwards. The active array is the tiling of
//! unit cells, and it is what the mask-loss budget is measured against.
//!
//! Each unit cell holds two square sub-pixels side by side. The side-A
//! sub-pixel sits in the left half and scatters towards the front viewer;
//! the side-B sub-pixel sits in the right half and scatters towards the back
//! viewer. A square black mask is centred on each sub-pixel, on the face
//! opposite to the one it serves.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

const MICRONS_PER_INCH: f64 = 25_400.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("panel field `{field}` must be strictly positive (got {value})")]
    NonPositive { field: &'static str, value: f64 },
    #[error("panel field `{field}` must be non-negative (got {value})")]
    Negative { field: &'static str, value: f64 },
    #[error("panel field `{field}` must be at least 1")]
    ZeroCount { field: &'static str },
    #[error("stage 1 panels have exactly one pixel (got {cols}x{rows})")]
    Stage1PixelCount { cols: u32, rows: u32 },
    #[error("{0}")]
    Layout(String),
    #[error("optical stack factor `{field}` must lie in (0, 1] (got {value})")]
    StackFactor { field: &'static str, value: f64 },
    #[error("electrode map is not defined for stage 1 panels (one unpatterned and one striped electrode)")]
    UnsupportedStage,
}

/// Which prototype stage a panel description corresponds to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Stage1,
    Stage2,
    Stage3,
    Custom,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Stage1 => "stage1",
            Stage::Stage2 => "stage2",
            Stage::Stage3 => "stage3",
            Stage::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        match s {
            "stage1" => Some(Stage::Stage1),
            "stage2" => Some(Stage::Stage2),
            "stage3" => Some(Stage::Stage3),
            "custom" => Some(Stage::Custom),
            _ => None,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The two viewing sides of the display.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    /// Front viewer.
    A,
    /// Back viewer.
    B,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::A => "A",
            Side::B => "B",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Geometric description of one display stage.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelSpec {
    pub stage: Stage,
    pub pixel_cols: u32,
    pub pixel_rows: u32,
    /// Sub-pixels per pixel along each axis, per side.
    pub subpixels_per_pixel_side: u32,
    pub subpixel_pitch_um: f64,
    /// Unit-cell period; one unit cell holds one side-A and one side-B sub-pixel.
    pub unit_cell_pitch_um: f64,
    /// Edge length of each square black mask. Zero means no masks.
    pub mask_size_um: f64,
    pub stripe_active_width_um: f64,
    pub stripe_inactive_width_um: f64,
    pub cell_gap_um: f64,
    pub panel_width_in: f64,
    pub panel_height_in: f64,
}

impl PanelSpec {
    /// Single-pixel striped cell used for the material studies.
    pub fn stage1() -> Self {
        PanelSpec {
            stage: Stage::Stage1,
            pixel_cols: 1,
            pixel_rows: 1,
            subpixels_per_pixel_side: 1,
            subpixel_pitch_um: 25.0,
            unit_cell_pitch_um: 275.0,
            mask_size_um: 0.0,
            stripe_active_width_um: 25.0,
            stripe_inactive_width_um: 250.0,
            cell_gap_um: 2.0,
            panel_width_in: 1.0,
            panel_height_in: 1.0,
        }
    }

    /// 2" x 2" prototype with a 4 x 4 pixel matrix.
    pub fn stage2() -> Self {
        PanelSpec {
            stage: Stage::Stage2,
            pixel_cols: 4,
            pixel_rows: 4,
            panel_width_in: 2.0,
            panel_height_in: 2.0,
            ..Self::multipixel_base()
        }
    }

    /// 4.5" x 4.5" prototype with a 10 x 10 pixel matrix.
    pub fn stage3() -> Self {
        PanelSpec {
            stage: Stage::Stage3,
            pixel_cols: 10,
            pixel_rows: 10,
            panel_width_in: 4.5,
            panel_height_in: 4.5,
            ..Self::multipixel_base()
        }
    }

    fn multipixel_base() -> Self {
        PanelSpec {
            stage: Stage::Custom,
            pixel_cols: 1,
            pixel_rows: 1,
            subpixels_per_pixel_side: 31,
            subpixel_pitch_um: 90.0,
            unit_cell_pitch_um: 300.0,
            mask_size_um: 90.0,
            stripe_active_width_um: 25.0,
            stripe_inactive_width_um: 250.0,
            cell_gap_um: 3.0,
            panel_width_in: 1.0,
            panel_height_in: 1.0,
        }
    }

    /// Looks up one of the built-in presets by name.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "stage1" => Some(Self::stage1()),
            "stage2" => Some(Self::stage2()),
            "stage3" => Some(Self::stage3()),
            _ => None,
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.pixel_cols as usize * self.pixel_rows as usize
    }

    /// Sub-pixels per side in one pixel (31² = 961 for the default layout).
    pub fn subpixels_per_pixel(&self) -> usize {
        let n = self.subpixels_per_pixel_side as usize;
        n * n
    }

    pub fn pixel_pitch_um(&self) -> f64 {
        self.unit_cell_pitch_um * f64::from(self.subpixels_per_pixel_side)
    }

    /// Width and height of the unit-cell tiling.
    pub fn active_size_um(&self) -> (f64, f64) {
        let p = self.pixel_pitch_um();
        (p * f64::from(self.pixel_cols), p * f64::from(self.pixel_rows))
    }

    /// Offset of the active array inside the panel outline (centred).
    pub fn active_origin_um(&self) -> (f64, f64) {
        let (w, h) = self.active_size_um();
        (
            (self.panel_width_in * MICRONS_PER_INCH - w) / 2.0,
            (self.panel_height_in * MICRONS_PER_INCH - h) / 2.0,
        )
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let positive = [
            ("subpixel_pitch_um", self.subpixel_pitch_um),
            ("unit_cell_pitch_um", self.unit_cell_pitch_um),
            ("stripe_active_width_um", self.stripe_active_width_um),
            ("stripe_inactive_width_um", self.stripe_inactive_width_um),
            ("cell_gap_um", self.cell_gap_um),
            ("panel_width_in", self.panel_width_in),
            ("panel_height_in", self.panel_height_in),
        ];
        for (field, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(GeometryError::NonPositive { field, value });
            }
        }
        if !(self.mask_size_um.is_finite() && self.mask_size_um >= 0.0) {
            return Err(GeometryError::Negative {
                field: "mask_size_um",
                value: self.mask_size_um,
            });
        }
        for (field, value) in [
            ("pixel_cols", self.pixel_cols),
            ("pixel_rows", self.pixel_rows),
            ("subpixels_per_pixel_side", self.subpixels_per_pixel_side),
        ] {
            if value == 0 {
                return Err(GeometryError::ZeroCount { field });
            }
        }
        if self.stage == Stage::Stage1 && (self.pixel_cols != 1 || self.pixel_rows != 1) {
            return Err(GeometryError::Stage1PixelCount {
                cols: self.pixel_cols,
                rows: self.pixel_rows,
            });
        }
        let half = self.unit_cell_pitch_um / 2.0;
        if self.subpixel_pitch_um > half {
            return Err(GeometryError::Layout(format!(
                "two {} um sub-pixels do not fit side by side in a {} um unit cell",
                self.subpixel_pitch_um, self.unit_cell_pitch_um
            )));
        }
        if self.mask_size_um > half {
            return Err(GeometryError::Layout(format!(
                "{} um masks overlap in a {} um unit cell",
                self.mask_size_um, self.unit_cell_pitch_um
            )));
        }
        let (w, h) = self.active_size_um();
        if w > self.panel_width_in * MICRONS_PER_INCH || h > self.panel_height_in * MICRONS_PER_INCH {
            return Err(GeometryError::Layout(format!(
                "active array {w} x {h} um exceeds the panel outline"
            )));
        }
        Ok(())
    }

    /// Area fractions of one unit cell.
    pub fn unit_cell(&self) -> UnitCellSpec {
        let cell = self.unit_cell_pitch_um * self.unit_cell_pitch_um;
        let sub = self.subpixel_pitch_um * self.subpixel_pitch_um / cell;
        let mask = 2.0 * self.mask_size_um * self.mask_size_um / cell;
        UnitCellSpec {
            frac_subpixel_a: sub,
            frac_subpixel_b: sub,
            frac_transparent: 1.0 - 2.0 * sub,
            frac_mask: mask,
        }
    }

    /// Rectangles of one unit cell whose top-left corner is at `(x0, y0)`.
    pub fn unit_cell_layout(&self, x0: f64, y0: f64) -> UnitCellLayout {
        let p = self.unit_cell_pitch_um;
        let centre_a = (x0 + p / 4.0, y0 + p / 2.0);
        let centre_b = (x0 + 3.0 * p / 4.0, y0 + p / 2.0);
        let sub = self.subpixel_pitch_um;
        let mask = self.mask_size_um;
        UnitCellLayout {
            cell: Rect::new(x0, y0, p, p),
            subpixel_a: Rect::centred(centre_a, sub),
            subpixel_b: Rect::centred(centre_b, sub),
            // The mask over the side-A sub-pixel sits on the back face and
            // vice versa.
            mask_on_back: (mask > 0.0).then(|| Rect::centred(centre_a, mask)),
            mask_on_front: (mask > 0.0).then(|| Rect::centred(centre_b, mask)),
        }
    }

    /// Top-left corners of every unit cell in the active array, row-major.
    pub fn unit_cell_origins(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let n = self.subpixels_per_pixel_side as usize;
        let cols = self.pixel_cols as usize * n;
        let rows = self.pixel_rows as usize * n;
        let p = self.unit_cell_pitch_um;
        (0..rows).flat_map(move |r| (0..cols).map(move |c| (c as f64 * p, r as f64 * p)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Rect { x, y, w, h }
    }

    fn centred((cx, cy): (f64, f64), size: f64) -> Self {
        Rect::new(cx - size / 2.0, cy - size / 2.0, size, size)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Intersection with `other`, or `None` when they do not overlap.
    pub fn clip(&self, other: &Rect) -> Option<Rect> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = (self.x + self.w).min(other.x + other.w);
        let y1 = (self.y + self.h).min(other.y + other.h);
        (x1 > x0 && y1 > y0).then(|| Rect::new(x0, y0, x1 - x0, y1 - y0))
    }

    pub fn centre(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitCellLayout {
    pub cell: Rect,
    pub subpixel_a: Rect,
    pub subpixel_b: Rect,
    pub mask_on_back: Option<Rect>,
    pub mask_on_front: Option<Rect>,
}

impl UnitCellLayout {
    pub fn masks(&self) -> impl Iterator<Item = &Rect> {
        self.mask_on_back.iter().chain(self.mask_on_front.iter())
    }
}

/// Area fractions of a unit cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitCellSpec {
    pub frac_subpixel_a: f64,
    pub frac_subpixel_b: f64,
    pub frac_transparent: f64,
    /// Projected black-mask area, both faces combined.
    pub frac_mask: f64,
}

/// Loss factors of the layer stack apart from the masks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticalStack {
    /// Glass/air interface reflections.
    pub t_interfaces: f64,
    pub t_ito: f64,
}

impl Default for OpticalStack {
    /// Calibration split of the non-mask loss; the product with an 18% mask
    /// loss gives 0.650.
    fn default() -> Self {
        OpticalStack {
            t_interfaces: 0.92,
            t_ito: 0.862,
        }
    }
}

impl OpticalStack {
    pub fn validate(&self) -> Result<(), GeometryError> {
        for (field, value) in [("t_interfaces", self.t_interfaces), ("t_ito", self.t_ito)] {
            if !(value > 0.0 && value <= 1.0) {
                return Err(GeometryError::StackFactor { field, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransparencyBudget {
    pub t_interfaces: f64,
    pub t_ito: f64,
    pub mask_loss: f64,
    pub transparency: f64,
}

/// Fraction of the active aperture covered by black masks.
///
/// Enumerates every unit cell, clips each mask to its cell and sums the
/// areas. Masks never overlap once the spec validates, so the sum is the
/// union area.
pub fn mask_loss_fraction(spec: &PanelSpec) -> Result<f64, GeometryError> {
    spec.validate()?;
    let mut masked = 0.0;
    let mut aperture = 0.0;
    for (x0, y0) in spec.unit_cell_origins() {
        let layout = spec.unit_cell_layout(x0, y0);
        aperture += layout.cell.area();
        masked += layout
            .masks()
            .filter_map(|m| m.clip(&layout.cell))
            .map(|r| r.area())
            .sum::<f64>();
    }
    Ok(masked / aperture)
}

/// Flat-band transmittance of the panel when idle.
pub fn panel_transparency(spec: &PanelSpec, stack: &OpticalStack) -> Result<TransparencyBudget, GeometryError> {
    stack.validate()?;
    let mask_loss = mask_loss_fraction(spec)?;
    Ok(TransparencyBudget {
        t_interfaces: stack.t_interfaces,
        t_ito: stack.t_ito,
        mask_loss,
        transparency: stack.t_interfaces * stack.t_ito * (1.0 - mask_loss),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ElectrodeId(pub u32);

impl fmt::Display for ElectrodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Common ground strip on the top substrate, one per pixel row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroundId(pub u32);

/// Addressing electrodes of a multi-pixel panel.
///
/// Pixel positions are `(row, col)` in panel coordinates as seen from the
/// front. Side-A ids come first in row-major order, then side-B ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElectrodeMap {
    cols: u32,
    rows: u32,
    pub ground_electrodes: BTreeSet<GroundId>,
}

impl ElectrodeMap {
    /// Map for a `cols` x `rows` pixel grid.
    pub fn for_grid(cols: u32, rows: u32) -> Self {
        ElectrodeMap {
            cols,
            rows,
            ground_electrodes: (0..rows).map(GroundId).collect(),
        }
    }

    pub fn cols(&self) -> u32 {
        self.cols
    }

    pub fn rows(&self) -> u32 {
        self.rows
    }

    pub fn pixel_count(&self) -> u32 {
        self.cols * self.rows
    }

    pub fn electrode(&self, side: Side, row: u32, col: u32) -> ElectrodeId {
        debug_assert!(row < self.rows && col < self.cols);
        let base = match side {
            Side::A => 0,
            Side::B => self.pixel_count(),
        };
        ElectrodeId(base + row * self.cols + col)
    }

    /// Side and panel position addressed by `id`, if it belongs to this map.
    pub fn locate(&self, id: ElectrodeId) -> Option<(Side, u32, u32)> {
        let n = self.pixel_count();
        let (side, k) = match id.0 {
            k if k < n => (Side::A, k),
            k if k < 2 * n => (Side::B, k - n),
            _ => return None,
        };
        Some((side, k / self.cols, k % self.cols))
    }

    pub fn side_of(&self, id: ElectrodeId) -> Option<Side> {
        self.locate(id).map(|(s, _, _)| s)
    }

    /// Ids of one side in row-major pixel order.
    pub fn side_electrodes(&self, side: Side) -> impl Iterator<Item = ElectrodeId> + '_ {
        (0..self.rows).flat_map(move |r| (0..self.cols).map(move |c| self.electrode(side, r, c)))
    }

    pub fn all_electrodes(&self) -> impl Iterator<Item = ElectrodeId> + '_ {
        self.side_electrodes(Side::A).chain(self.side_electrodes(Side::B))
    }
}

pub fn electrode_map(spec: &PanelSpec) -> Result<ElectrodeMap, GeometryError> {
    spec.validate()?;
    if spec.stage == Stage::Stage1 {
        return Err(GeometryError::UnsupportedStage);
    }
    Ok(ElectrodeMap::for_grid(spec.pixel_cols, spec.pixel_rows))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubpixelEntry {
    pub row: u32,
    pub col: u32,
    pub side: Side,
    /// Centre in panel-outline coordinates, micrometres.
    pub centre_um: (f64, f64),
    /// +1 towards the front viewer, -1 towards the back viewer.
    pub facing: i8,
}

/// One entry per sub-pixel, ordered by pixel (row-major), then unit cell
/// (row-major), then side.
pub fn subpixel_table(spec: &PanelSpec) -> Result<Vec<SubpixelEntry>, GeometryError> {
    spec.validate()?;
    let n = spec.subpixels_per_pixel_side;
    let p = spec.unit_cell_pitch_um;
    let pixel = spec.pixel_pitch_um();
    let (ox, oy) = spec.active_origin_um();
    let mut out = Vec::with_capacity(spec.pixel_count() * spec.subpixels_per_pixel() * 2);
    for row in 0..spec.pixel_rows {
        for col in 0..spec.pixel_cols {
            for cr in 0..n {
                for cc in 0..n {
                    let x0 = ox + f64::from(col) * pixel + f64::from(cc) * p;
                    let y0 = oy + f64::from(row) * pixel + f64::from(cr) * p;
                    let layout = spec.unit_cell_layout(x0, y0);
                    for (side, rect, facing) in [(Side::A, layout.subpixel_a, 1), (Side::B, layout.subpixel_b, -1)] {
                        out.push(SubpixelEntry {
                            row,
                            col,
                            side,
                            centre_um: rect.centre(),
                            facing,
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}
