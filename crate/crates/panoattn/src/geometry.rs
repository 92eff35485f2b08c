//! Panoramic multi-camera layout, feature pyramid container and window
//! partitioning with cyclic shifts.
//!
//! A scene is observed by `M` ring-ordered cameras. Per pyramid level the
//! per-camera feature maps are concatenated along width into one panoramic
//! map of `pano_h x pano_w` cells (`pano_w = M * per_view_w`), so horizontal
//! adjacency in the map matches physical adjacency around the ring and the
//! left/right edges wrap onto each other.
//!
//! Two window grids tile each level: multi-view-axis windows (short and wide,
//! exchanging information across cameras at the same image height) and ROI
//! windows (square-ish, exchanging local spatial information). Alternate
//! encoder stages displace the grids cyclically so neighbouring windows get
//! connected.

use ndarray::{Array3, Array4, ArrayView3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which of the two window grids a partition belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    /// Multi-view axis windows: small height, wide span across cameras.
    MvAxis,
    /// Region-of-interest windows: local spatial neighbourhoods.
    Roi,
}

impl WindowKind {
    pub const ALL: [WindowKind; 2] = [WindowKind::MvAxis, WindowKind::Roi];

    pub fn label(self) -> &'static str {
        match self {
            WindowKind::MvAxis => "mv",
            WindowKind::Roi => "roi",
        }
    }
}

/// Per-level window/shift specification, in feature-map cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelSpec {
    /// Downsampling factor relative to the input image.
    pub stride: usize,
    /// Multi-view-axis window size (height, width).
    pub mv_window: (usize, usize),
    /// ROI window size (height, width).
    pub roi_window: (usize, usize),
    /// Horizontal displacement of the MV grid on shifted stages (dy, dx).
    pub mv_shift: (usize, usize),
    /// Diagonal displacement of the ROI grid on shifted stages (dy, dx).
    pub roi_shift: (usize, usize),
}

/// Camera ring and pyramid description. Validated by [`PanoramaLayout::build`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RigConfig {
    /// Number of cameras M.
    pub num_cameras: usize,
    /// Input image height in pixels (per camera).
    pub image_height: usize,
    /// Input image width in pixels (per camera).
    pub image_width: usize,
    /// `ring_order[p]` is the camera index placed at panorama slot `p`.
    /// Must be a permutation of `0..num_cameras`. With cameras indexed in
    /// physical order (front-left, front, front-right, back-right, back,
    /// back-left) the identity permutation is the correct default.
    pub ring_order: Vec<usize>,
    /// Pyramid levels، strictly increasing stride.
    pub levels: Vec<LevelSpec>,
}

impl RigConfig {
    /// Panorama slot occupied by camera `cam`.
    pub fn ring_position(&self, cam: usize) -> Option<usize> {
        self.ring_order.iter().position(|&c| c == cam)
    }
}

/// Geometry of one pyramid level after validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutLevel {
    pub stride: usize,
    pub per_view_h: usize,
    pub per_view_w: usize,
    pub pano_h: usize,
    pub pano_w: usize,
    pub mv_window: (usize, usize),
    pub roi_window: (usize, usize),
    pub mv_shift: (usize, usize),
    pub roi_shift: (usize, usize),
    /// Number of MV-axis windows tiling this level.
    pub r_mv: usize,
    /// Number of ROI windows tiling this level.
    pub r_roi: usize,
}

impl LayoutLevel {
    pub fn window(&self, kind: WindowKind) -> (usize, usize) {
        match kind {
            WindowKind::MvAxis => self.mv_window,
            WindowKind::Roi => self.roi_window,
        }
    }

    pub fn shift(&self, kind: WindowKind) -> (usize, usize) {
        match kind {
            WindowKind::MvAxis => self.mv_shift,
            WindowKind::Roi => self.roi_shift,
        }
    }

    pub fn window_count(&self, kind: WindowKind) -> usize {
        match kind {
            WindowKind::MvAxis => self.r_mv,
            WindowKind::Roi => self.r_roi,
        }
    }

    pub fn cells(&self) -> usize {
        self.pano_h * self.pano_w
    }
}

/// Validated panoramic layout: the rig plus derived per-level geometry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanoramaLayout {
    pub rig: RigConfig,
    pub levels: Vec<LayoutLevel>,
}

fn check_divides(
    num: usize,
    den: usize,
    level: usize,
    what: &str,
    axis: &str,
) -> Result<()> {
    if den == 0 || num % den != 0 {
        return Err(Error::Config(format!(
            "level {level}: {what} ({den}) does not divide the {axis} extent ({num})"
        )));
    }
    Ok(())
}

impl PanoramaLayout {
    /// Validate a rig description and derive per-level panoramic geometry.
    pub fn build(rig: RigConfig) -> Result<PanoramaLayout> {
        if rig.num_cameras == 0 {
            return Err(Error::Config("num_cameras must be >= 1".into()));
        }
        if rig.levels.is_empty() {
            return Err(Error::Config("at least one pyramid level is required".into()));
        }
        if rig.ring_order.len() != rig.num_cameras {
            return Err(Error::Config(format!(
                "ring_order has {} entries, expected {}",
                rig.ring_order.len(),
                rig.num_cameras
            )));
        }
        let mut seen = vec![false; rig.num_cameras];
        for &cam in &rig.ring_order {
            if cam >= rig.num_cameras || seen[cam] {
                return Err(Error::Config(format!(
                    "ring_order is not a permutation of 0..{}",
                    rig.num_cameras
                )));
            }
            seen[cam] = true;
        }

        let mut levels = Vec::with_capacity(rig.levels.len());
        let mut prev_stride = 0usize;
        for (li, spec) in rig.levels.iter().enumerate() {
            if spec.stride <= prev_stride {
                return Err(Error::Config(format!(
                    "level {li}: stride {} must be strictly increasing (previous {})",
                    spec.stride, prev_stride
                )));
            }
            prev_stride = spec.stride;
            check_divides(rig.image_height, spec.stride, li, "stride", "image height")?;
            check_divides(rig.image_width, spec.stride, li, "stride", "image width")?;
            let per_view_h = rig.image_height / spec.stride;
            let per_view_w = rig.image_width / spec.stride;
            let pano_h = per_view_h;
            let pano_w = rig.num_cameras * per_view_w;

            check_divides(pano_h, spec.mv_window.0, li, "mv window height", "height")?;
            check_divides(pano_w, spec.mv_window.1, li, "mv window width", "width")?;
            check_divides(pano_h, spec.roi_window.0, li, "roi window height", "height")?;
            check_divides(pano_w, spec.roi_window.1, li, "roi window width", "width")?;

            for (kind, window, shift) in [
                ("mv", spec.mv_window, spec.mv_shift),
                ("roi", spec.roi_window, spec.roi_shift),
            ] {
                if shift.0 >= window.0 {
                    return Err(Error::Config(format!(
                        "level {li}: {kind} vertical shift {} must be < window height {}",
                        shift.0, window.0
                    )));
                }
                if shift.1 >= window.1 {
                    return Err(Error::Config(format!(
                        "level {li}: {kind} horizontal shift {} must be < window width {}",
                        shift.1, window.1
                    )));
                }
            }

            let r_mv = (pano_h / spec.mv_window.0) * (pano_w / spec.mv_window.1);
            let r_roi = (pano_h / spec.roi_window.0) * (pano_w / spec.roi_window.1);
            levels.push(LayoutLevel {
                stride: spec.stride,
                per_view_h,
                per_view_w,
                pano_h,
                pano_w,
                mv_window: spec.mv_window,
                roi_window: spec.roi_window,
                mv_shift: spec.mv_shift,
                roi_shift: spec.roi_shift,
                r_mv,
                r_roi,
            });
        }

        Ok(PanoramaLayout { rig, levels })
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, index: usize) -> Result<&LayoutLevel> {
        self.levels
            .get(index)
            .ok_or_else(|| Error::Argument(format!("level {index} out of range")))
    }
}

/// Index mapping between panoramic cells and `(window, slot)` pairs for one
/// level, window kind and shift state.
///
/// For a shifted partition the grid is displaced so that the cell at
/// `(dy, dx)` becomes the origin of window 0: cell `(y, x)` is tiled at its
/// displaced position `((y - dy) mod H, (x - dx) mod W)`. The displacement is
/// cyclic on both axes; the panorama is a physical ring horizontally, while
/// vertically wrapped pairs get masked out of attention (see
/// [`crate::attention::wrap_mask`]).
#[derive(Debug, Clone)]
pub struct WindowPartition {
    pub level: usize,
    pub kind: WindowKind,
    pub window: (usize, usize),
    /// Displacement applied before tiling; `(0, 0)` when unshifted.
    pub shift: (usize, usize),
    pub shifted: bool,
    pub pano_h: usize,
    pub pano_w: usize,
    pub num_windows: usize,
    pub slots_per_window: usize,
    /// cell (row-major) -> (window, slot)
    forward: Vec<(u32, u32)>,
    /// window * slots_per_window + slot -> cell (row-major)
    inverse: Vec<u32>,
}

impl WindowPartition {
    /// Window and slot of the cell at `(y, x)`.
    pub fn window_slot(&self, y: usize, x: usize) -> (usize, usize) {
        let (w, s) = self.forward[y * self.pano_w + x];
        (w as usize, s as usize)
    }

    /// Cell `(y, x)` occupying `slot` of `window`.
    pub fn cell_of(&self, window: usize, slot: usize) -> (usize, usize) {
        let c = self.inverse[window * self.slots_per_window + slot] as usize;
        (c / self.pano_w, c % self.pano_w)
    }

    /// Original row of every slot of `window`; used to build wrap masks.
    pub fn window_rows(&self, window: usize) -> impl Iterator<Item = usize> + '_ {
        let base = window * self.slots_per_window;
        self.inverse[base..base + self.slots_per_window]
            .iter()
            .map(move |&c| c as usize / self.pano_w)
    }
}

/// Tile one pyramid level into windows, optionally displaced by the level's
/// shift for that window kind.
pub fn partition_windows(
    layout: &PanoramaLayout,
    level: usize,
    kind: WindowKind,
    shifted: bool,
) -> Result<WindowPartition> {
    let lv = layout.level(level)?;
    let (wh, ww) = lv.window(kind);
    let shift = if shifted { lv.shift(kind) } else { (0, 0) };
    let (pano_h, pano_w) = (lv.pano_h, lv.pano_w);
    let windows_per_row = pano_w / ww;
    let num_windows = lv.window_count(kind);
    let slots = wh * ww;

    let mut forward = vec![(0u32, 0u32); pano_h * pano_w];
    let mut inverse = vec![0u32; num_windows * slots];
    for y in 0..pano_h {
        // displaced position of (y, x) once the grid origin moves to (dy, dx)
        let sy = (y + pano_h - shift.0) % pano_h;
        for x in 0..pano_w {
            let sx = (x + pano_w - shift.1) % pano_w;
            let win = (sy / wh) * windows_per_row + sx / ww;
            let slot = (sy % wh) * ww + (sx % ww);
            forward[y * pano_w + x] = (win as u32, slot as u32);
            inverse[win * slots + slot] = (y * pano_w + x) as u32;
        }
    }

    Ok(WindowPartition {
        level,
        kind,
        window: (wh, ww),
        shift,
        shifted,
        pano_h,
        pano_w,
        num_windows,
        slots_per_window: slots,
        forward,
        inverse,
    })
}

/// Multi-level dense feature maps of shape `(B, C, pano_h, pano_w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid {
    levels: Vec<Array4<f64>>,
}

impl FeaturePyramid {
    /// Wrap per-level tensors, checking batch/channel consistency against the
    /// layout and that every element is finite.
    pub fn new(levels: Vec<Array4<f64>>, layout: &PanoramaLayout) -> Result<FeaturePyramid> {
        if levels.len() != layout.num_levels() {
            return Err(Error::Argument(format!(
                "pyramid has {} levels, layout expects {}",
                levels.len(),
                layout.num_levels()
            )));
        }
        let (b0, c0) = {
            let d = levels[0].dim();
            (d.0, d.1)
        };
        for (li, (map, lv)) in levels.iter().zip(&layout.levels).enumerate() {
            let (b, c, h, w) = map.dim();
            if b != b0 || c != c0 {
                return Err(Error::Argument(format!(
                    "level {li}: batch/channel ({b}, {c}) differ from level 0 ({b0}, {c0})"
                )));
            }
            if h != lv.pano_h || w != lv.pano_w {
                return Err(Error::Argument(format!(
                    "level {li}: map is {h}x{w}, layout expects {}x{}",
                    lv.pano_h, lv.pano_w
                )));
            }
            if !map.iter().all(|v| v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "level {li}: non-finite feature values"
                )));
            }
        }
        Ok(FeaturePyramid { levels })
    }

    /// Wrap tensors without the finiteness scan; shapes are still checked.
    pub(crate) fn from_levels_unchecked(levels: Vec<Array4<f64>>) -> FeaturePyramid {
        FeaturePyramid { levels }
    }

    pub fn batch(&self) -> usize {
        self.levels[0].dim().0
    }

    pub fn channels(&self) -> usize {
        self.levels[0].dim().1
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, index: usize) -> &Array4<f64> {
        &self.levels[index]
    }

    pub fn levels(&self) -> &[Array4<f64>] {
        &self.levels
    }

    pub fn levels_mut(&mut self) -> &mut [Array4<f64>] {
        &mut self.levels
    }

    pub fn into_levels(self) -> Vec<Array4<f64>> {
        self.levels
    }
}

/// Cyclically displace a level map: the element at `(y, x)` moves to
/// `((y + dy) mod H, (x + dx) mod W)`. Negative displacements are the inverse.
pub fn cyclic_shift(map: &Array4<f64>, dy: isize, dx: isize) -> Result<Array4<f64>> {
    let (b, c, h, w) = map.dim();
    if dy.unsigned_abs() >= h || dx.unsigned_abs() >= w {
        return Err(Error::Argument(format!(
            "shift ({dy}, {dx}) out of range for a {h}x{w} map"
        )));
    }
    let hh = h as isize;
    let ww = w as isize;
    let mut out = Array4::zeros((b, c, h, w));
    for bi in 0..b {
        for ci in 0..c {
            for y in 0..h {
                let ty = ((y as isize + dy).rem_euclid(hh)) as usize;
                for x in 0..w {
                    let tx = ((x as isize + dx).rem_euclid(ww)) as usize;
                    out[[bi, ci, ty, tx]] = map[[bi, ci, y, x]];
                }
            }
        }
    }
    Ok(out)
}

/// Gather a single-batch map `(C, H, W)` into the window tensor
/// `(r, h*w, C)` described by `partition`.
pub fn gather_windows(map: &ArrayView3<f64>, partition: &WindowPartition) -> Result<Array3<f64>> {
    let (c, h, w) = map.dim();
    if h != partition.pano_h || w != partition.pano_w {
        return Err(Error::Argument(format!(
            "map is {h}x{w}, partition expects {}x{}",
            partition.pano_h, partition.pano_w
        )));
    }
    let mut out = Array3::zeros((partition.num_windows, partition.slots_per_window, c));
    for win in 0..partition.num_windows {
        for slot in 0..partition.slots_per_window {
            let (y, x) = partition.cell_of(win, slot);
            for ci in 0..c {
                out[[win, slot, ci]] = map[[ci, y, x]];
            }
        }
    }
    Ok(out)
}

/// Scatter a window tensor `(r, h*w, C)` back onto a `(C, H, W)` map.
/// Exact inverse of [`gather_windows`] for the same partition.
pub fn scatter_windows(
    windows: &ArrayView3<f64>,
    partition: &WindowPartition,
) -> Result<Array3<f64>> {
    let (r, n, c) = windows.dim();
    if r != partition.num_windows || n != partition.slots_per_window {
        return Err(Error::Argument(format!(
            "window tensor is ({r}, {n}, {c}), partition expects ({}, {}, _)",
            partition.num_windows, partition.slots_per_window
        )));
    }
    let mut out = Array3::zeros((c, partition.pano_h, partition.pano_w));
    for win in 0..r {
        for slot in 0..n {
            let (y, x) = partition.cell_of(win, slot);
            for ci in 0..c {
                out[[ci, y, x]] = windows[[win, slot, ci]];
            }
        }
    }
    Ok(out)
}
