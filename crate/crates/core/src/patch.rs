//! Patches, image grids and masks, plus extraction and overlap averaging.
//!
//! Patches are 8x8 tiles flattened row-major: value `(x, y)` of the tile
//! lives at index `y * 8 + x`. Model files rely on this ordering.

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const PATCH_SIDE: usize = 8;
pub const PATCH_LEN: usize = PATCH_SIDE * PATCH_SIDE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Channel {
    Disparity,
    Intensity,
}

/// An 8x8 tile of one channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Patch<T> {
    values: [T; PATCH_LEN],
    kind: Channel,
}

impl<T: Real> Patch<T> {
    pub fn new(values: &[T], kind: Channel) -> Result<Self> {
        if values.len() != PATCH_LEN {
            return Err(Error::mismatch(format!("patch needs {PATCH_LEN} values, got {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("patch"));
        }
        Ok(Self { values: std::array::from_fn(|i| values[i]), kind })
    }

    pub fn constant(value: T, kind: Channel) -> Self {
        Self { values: [value; PATCH_LEN], kind }
    }

    pub fn from_fn(kind: Channel, f: impl Fn(usize, usize) -> T) -> Self {
        Self { values: std::array::from_fn(|i| f(i % PATCH_SIDE, i / PATCH_SIDE)), kind }
    }

    #[inline]
    pub fn kind(&self) -> Channel {
        self.kind
    }

    #[inline]
    pub fn values(&self) -> &[T; PATCH_LEN] {
        &self.values
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> T {
        self.values[y * PATCH_SIDE + x]
    }

    pub fn mean(&self) -> T {
        self.values.iter().copied().sum::<T>() / T::lit(PATCH_LEN as f64)
    }

    pub fn cast<U: Real>(&self) -> Patch<U> {
        Patch { values: std::array::from_fn(|i| U::lit(self.values[i].as_f64())), kind: self.kind }
    }
}

impl<T> AsRef<[T]> for Patch<T> {
    fn as_ref(&self) -> &[T] {
        &self.values
    }
}

/// A single-channel image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid<T> {
    width: usize,
    height: usize,
    values: Vec<T>,
    channel: Channel,
}

impl<T: Real> ImageGrid<T> {
    pub fn new(width: usize, height: usize, values: Vec<T>, channel: Channel) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::mismatch(format!("{} values for a {width}x{height} image", values.len())));
        }
        Ok(Self { width, height, values, channel })
    }

    pub fn filled(width: usize, height: usize, value: T, channel: Channel) -> Self {
        Self { width, height, values: vec![value; width * height], channel }
    }

    pub fn from_fn(width: usize, height: usize, channel: Channel, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self { width, height, values, channel }
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
    pub fn channel(&self) -> Channel {
        self.channel
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.values[y * self.width + x] = v;
    }

    /// The 8x8 tile with top-left corner `(x, y)`.
    pub fn patch_at(&self, x: usize, y: usize) -> Patch<T> {
        assert!(x + PATCH_SIDE <= self.width && y + PATCH_SIDE <= self.height, "patch outside image");
        Patch::from_fn(self.channel, |dx, dy| self.get(x + dx, y + dy))
    }

    pub fn same_dims<U>(&self, other: &ImageGrid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn cast<U: Real>(&self) -> ImageGrid<U> {
        ImageGrid {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|v| U::lit(v.as_f64())).collect(),
            channel: self.channel,
        }
    }
}

/// Per-pixel observation flags; `true` means observed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask {
    width: usize,
    height: usize,
    observed: Vec<bool>,
}

impl PixelMask {
    pub fn new(width: usize, height: usize, observed: Vec<bool>) -> Result<Self> {
        if observed.len() != width * height {
            return Err(Error::mismatch(format!("{} flags for a {width}x{height} mask", observed.len())));
        }
        Ok(Self { width, height, observed })
    }

    pub fn all_observed(width: usize, height: usize) -> Self {
        Self { width, height, observed: vec![true; width * height] }
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
    pub fn is_observed(&self, x: usize, y: usize) -> bool {
        self.observed[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, observed: bool) {
        self.observed[y * self.width + x] = observed;
    }

    pub fn flags(&self) -> &[bool] {
        &self.observed
    }

    pub fn matches<T>(&self, image: &ImageGrid<T>) -> bool {
        self.width == image.width && self.height == image.height
    }

    pub fn hidden_count(&self) -> usize {
        self.observed.iter().filter(|o| !**o).count()
    }
}

/// A patch split into its mean and the zero-mean remainder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcDecomposition<T> {
    pub dc: T,
    pub residual: Patch<T>,
}

impl<T: Real> DcDecomposition<T> {
    pub fn reconstruct(&self) -> Patch<T> {
        Patch::from_fn(self.residual.kind(), |x, y| self.residual.at(x, y) + self.dc)
    }
}

pub fn remove_dc<T: Real>(patch: &Patch<T>) -> DcDecomposition<T> {
    let dc = patch.mean();
    let residual = Patch::from_fn(patch.kind(), |x, y| patch.at(x, y) - dc);
    DcDecomposition { dc, residual }
}

/// Subtracts the mean of an arbitrary-length vector.
pub fn remove_dc_slice<T: Real>(values: &[T]) -> Vec<T> {
    if values.is_empty() {
        return Vec::new();
    }
    let dc = values.iter().copied().sum::<T>() / T::lit(values.len() as f64);
    values.iter().map(|&v| v - dc).collect()
}

/// Top-left corners of all patches on a `stride` lattice that fit inside
/// a `width` x `height` image, in row-major order.
pub fn patch_positions(width: usize, height: usize, stride: usize) -> Result<Vec<(usize, usize)>> {
    if width < PATCH_SIDE || height < PATCH_SIDE {
        return Err(Error::DimensionTooSmall { width, height });
    }
    if stride == 0 || stride > PATCH_SIDE {
        return Err(Error::param(format!("stride must be in 1..=8, got {stride}")));
    }
    let mut out = Vec::new();
    for y in (0..=height - PATCH_SIDE).step_by(stride) {
        for x in (0..=width - PATCH_SIDE).step_by(stride) {
            out.push((x, y));
        }
    }
    Ok(out)
}

pub fn extract_patches<T: Real>(image: &ImageGrid<T>, stride: usize) -> Result<Vec<(Patch<T>, (usize, usize))>> {
    let positions = patch_positions(image.width(), image.height(), stride)?;
    Ok(positions.into_iter().map(|(x, y)| (image.patch_at(x, y), (x, y))).collect())
}

/// Averages overlapping patches back onto a `width` x `height` canvas.
///
/// Sums and counts are accumulated in input order, so the output only
/// depends on the sequence of patches.
pub fn reassemble_average<'a, T, I>(patches: I, width: usize, height: usize, channel: Channel) -> Result<ImageGrid<T>>
where
    T: Real,
    I: IntoIterator<Item = (&'a Patch<T>, (usize, usize))>,
{
    // offsets from each pixel's first value, so identical contributions
    // average back to that value exactly
    let mut first = vec![T::zero(); width * height];
    let mut sum = vec![T::zero(); width * height];
    let mut count = vec![0u32; width * height];
    for (patch, (x0, y0)) in patches {
        if x0 + PATCH_SIDE > width || y0 + PATCH_SIDE > height {
            return Err(Error::mismatch(format!("patch at ({x0},{y0}) exceeds {width}x{height} canvas")));
        }
        for dy in 0..PATCH_SIDE {
            let row = (y0 + dy) * width + x0;
            for dx in 0..PATCH_SIDE {
                let (i, v) = (row + dx, patch.at(dx, dy));
                if count[i] == 0 {
                    first[i] = v;
                } else {
                    sum[i] += v - first[i];
                }
                count[i] += 1;
            }
        }
    }
    let uncovered: Vec<(usize, usize)> =
        (0..width * height).filter(|&i| count[i] == 0).map(|i| (i % width, i / width)).collect();
    if !uncovered.is_empty() {
        return Err(Error::UncoveredPixels(uncovered));
    }
    let values = first.into_iter().zip(sum).zip(count).map(|((f, s), c)| f + s / T::lit(f64::from(c))).collect();
    ImageGrid::new(width, height, values, channel)
}
