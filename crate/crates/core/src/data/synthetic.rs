use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::models::{seeded_rng, SeededRng};
use crate::patch::{Channel, ImageGrid, Patch, PixelMask, PATCH_SIDE};
use crate::scalar::Real;

/// Configuration of the flat-or-edge generator.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub flat_prob: f64,
    /// Probability that intensity copies the disparity structure.
    pub rho: f64,
    /// Edge offsets are uniform in `[-max_offset, max_offset]` pixels from
    /// the patch centre.
    pub max_offset: f64,
    /// Minimum plateau difference on an edge.
    pub min_contrast: f64,
    /// Standard deviation of the additive micro-noise.
    pub noise_floor: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { flat_prob: 0.8, rho: 0.6, max_offset: 3.0, min_contrast: 0.1, noise_floor: 1e-3, seed: 0 }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("flat_prob", self.flat_prob), ("rho", self.rho)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::param(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if !(0.0..=3.5).contains(&self.max_offset) {
            return Err(Error::param(format!("max_offset must lie in [0, 3.5], got {}", self.max_offset)));
        }
        if !(0.0..1.0).contains(&self.min_contrast) {
            return Err(Error::param(format!("min_contrast must lie in [0, 1), got {}", self.min_contrast)));
        }
        if !(self.noise_floor >= 0.0) || !self.noise_floor.is_finite() {
            return Err(Error::param(format!("noise_floor must be finite and nonnegative, got {}", self.noise_floor)));
        }
        Ok(())
    }
}

/// A straight step edge: pixels with `n·(p - centre) < offset` take the
/// `low_side` value, where `n = (cos θ, sin θ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeGeometry {
    pub angle: f64,
    pub offset: f64,
}

impl EdgeGeometry {
    const CENTRE: f64 = (PATCH_SIDE as f64 - 1.0) / 2.0;

    fn draw(rng: &mut SeededRng, max_offset: f64) -> Self {
        let angle = rng.random_range(0.0..std::f64::consts::PI);
        let offset = if max_offset > 0.0 { rng.random_range(-max_offset..=max_offset) } else { 0.0 };
        Self { angle, offset }
    }

    pub fn low_side(&self, x: usize, y: usize) -> bool {
        let (s, c) = self.angle.sin_cos();
        c * (x as f64 - Self::CENTRE) + s * (y as f64 - Self::CENTRE) < self.offset
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPair<T> {
    pub intensity: Patch<T>,
    pub disparity: Patch<T>,
    pub intensity_edge: Option<EdgeGeometry>,
    pub disparity_edge: Option<EdgeGeometry>,
}

fn plateaus(rng: &mut SeededRng, min_contrast: f64) -> (f64, f64) {
    loop {
        let (a, b): (f64, f64) = (rng.random(), rng.random());
        if (a - b).abs() >= min_contrast {
            return (a, b);
        }
    }
}

fn render<T: Real>(edge: Option<EdgeGeometry>, rng: &mut SeededRng, spec: &SyntheticSpec, noise: &Normal<f64>, kind: Channel) -> Patch<T> {
    let (a, b) = match edge {
        Some(_) => plateaus(rng, spec.min_contrast),
        None => {
            let v = rng.random();
            (v, v)
        }
    };
    let mut values = [T::zero(); PATCH_SIDE * PATCH_SIDE];
    for y in 0..PATCH_SIDE {
        for x in 0..PATCH_SIDE {
            let base = match edge {
                Some(e) if e.low_side(x, y) => a,
                _ => b,
            };
            values[y * PATCH_SIDE + x] = T::lit(base + noise.sample(rng));
        }
    }
    Patch::new(&values, kind).expect("finite synthetic values")
}

/// Aligned intensity/disparity patch pairs, each flat or a single step
/// edge. With probability `rho` the intensity patch reuses the disparity
/// geometry (flat or edge) with its own plateau values; otherwise its
/// structure is drawn independently.
pub fn generate_synthetic<T: Real>(spec: &SyntheticSpec, count: usize) -> Result<Vec<SyntheticPair<T>>> {
    spec.validate()?;
    let mut rng = seeded_rng(spec.seed);
    let noise = Normal::new(0.0, spec.noise_floor).expect("validated noise floor");
    let draw_structure = |rng: &mut SeededRng| {
        if rng.random_bool(spec.flat_prob) {
            None
        } else {
            Some(EdgeGeometry::draw(rng, spec.max_offset))
        }
    };
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let disparity_edge = draw_structure(&mut rng);
        let intensity_edge = if rng.random_bool(spec.rho) { disparity_edge } else { draw_structure(&mut rng) };
        let disparity = render(disparity_edge, &mut rng, spec, &noise, Channel::Disparity);
        let intensity = render(intensity_edge, &mut rng, spec, &noise, Channel::Intensity);
        out.push(SyntheticPair { intensity, disparity, intensity_edge, disparity_edge });
    }
    Ok(out)
}

/// Splits pairs into `(intensity, disparity)` value vectors.
pub fn pair_values<T: Real>(pairs: &[SyntheticPair<T>]) -> (Vec<Vec<T>>, Vec<Vec<T>>) {
    pairs.iter().map(|p| (p.intensity.values().to_vec(), p.disparity.values().to_vec())).unzip()
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SyntheticImageSpec {
    pub width: usize,
    pub height: usize,
    /// Depth layers, painted back to front.
    pub shapes: usize,
    /// Probability that a layer's outline also appears in intensity.
    pub rho: f64,
    /// Extra intensity-only regions (texture without depth change).
    pub intensity_shapes: usize,
    pub noise_floor: f64,
    pub seed: u64,
}

impl Default for SyntheticImageSpec {
    fn default() -> Self {
        Self { width: 128, height: 128, shapes: 6, rho: 0.8, intensity_shapes: 3, noise_floor: 1e-3, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticImage<T> {
    pub intensity: ImageGrid<T>,
    pub disparity: ImageGrid<T>,
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    Disc { cx: f64, cy: f64, r: f64 },
    HalfPlane { angle: f64, offset: f64, cx: f64, cy: f64 },
}

impl Shape {
    fn draw(rng: &mut SeededRng, w: f64, h: f64) -> Self {
        match rng.random_range(0..3) {
            0 => {
                let (xa, xb) = (rng.random_range(0.0..w), rng.random_range(0.0..w));
                let (ya, yb) = (rng.random_range(0.0..h), rng.random_range(0.0..h));
                Shape::Rect { x0: xa.min(xb), y0: ya.min(yb), x1: xa.max(xb) + 8.0, y1: ya.max(yb) + 8.0 }
            }
            1 => Shape::Disc { cx: rng.random_range(0.0..w), cy: rng.random_range(0.0..h), r: rng.random_range(8.0..w.min(h) / 3.0 + 8.0) },
            _ => Shape::HalfPlane {
                angle: rng.random_range(0.0..2.0 * std::f64::consts::PI),
                offset: rng.random_range(-0.3..0.3) * w.min(h),
                cx: w / 2.0,
                cy: h / 2.0,
            },
        }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Rect { x0, y0, x1, y1 } => x >= x0 && x < x1 && y >= y0 && y < y1,
            Shape::Disc { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) < r * r,
            Shape::HalfPlane { angle, offset, cx, cy } => {
                let (s, c) = angle.sin_cos();
                c * (x - cx) + s * (y - cy) < offset
            }
        }
    }
}

/// A piecewise-constant scene: depth layers whose outlines appear in the
/// intensity image with probability `rho`, plus intensity-only regions.
pub fn generate_synthetic_image<T: Real>(spec: &SyntheticImageSpec) -> Result<SyntheticImage<T>> {
    if spec.width < PATCH_SIDE || spec.height < PATCH_SIDE {
        return Err(Error::DimensionTooSmall { width: spec.width, height: spec.height });
    }
    if !(0.0..=1.0).contains(&spec.rho) {
        return Err(Error::param(format!("rho must lie in [0, 1], got {}", spec.rho)));
    }
    if !(spec.noise_floor >= 0.0) || !spec.noise_floor.is_finite() {
        return Err(Error::param("noise_floor must be finite and nonnegative"));
    }
    let (w, h) = (spec.width, spec.height);
    let mut rng = seeded_rng(spec.seed);
    let noise = Normal::new(0.0, spec.noise_floor).expect("validated noise floor");
    let mut disparity = vec![rng.random_range(0.1..0.4); w * h];
    let mut intensity = vec![rng.random::<f64>(); w * h];
    let paint = |buf: &mut Vec<f64>, shape: &Shape, value: f64| {
        for y in 0..h {
            for x in 0..w {
                if shape.contains(x as f64 + 0.5, y as f64 + 0.5) {
                    buf[y * w + x] = value;
                }
            }
        }
    };
    for _ in 0..spec.shapes {
        let shape = Shape::draw(&mut rng, w as f64, h as f64);
        paint(&mut disparity, &shape, rng.random_range(0.1..1.0));
        let iv = rng.random::<f64>();
        if rng.random_bool(spec.rho) {
            paint(&mut intensity, &shape, iv);
        }
    }
    for _ in 0..spec.intensity_shapes {
        let shape = Shape::draw(&mut rng, w as f64, h as f64);
        paint(&mut intensity, &shape, rng.random());
    }
    let mut finish = |buf: Vec<f64>, channel| {
        let values = buf.into_iter().map(|v| T::lit(v + noise.sample(&mut rng))).collect();
        ImageGrid::new(w, h, values, channel)
    };
    let disparity = finish(disparity, Channel::Disparity)?;
    let intensity = finish(intensity, Channel::Intensity)?;
    Ok(SyntheticImage { intensity, disparity })
}

/// Square holes of side `hole_size` at seeded positions, kept one pixel
/// apart so each is its own 4-connected component, plus Gaussian noise of
/// standard deviation `sigma` on the observed pixels. Hole pixels read 0.
pub fn corrupt_image<T: Real>(clean: &ImageGrid<T>, holes: usize, hole_size: usize, sigma: f64, seed: u64) -> Result<(ImageGrid<T>, PixelMask)> {
    let (w, h) = (clean.width(), clean.height());
    if holes > 0 && (hole_size == 0 || hole_size > w || hole_size > h) {
        return Err(Error::param(format!("hole size {hole_size} does not fit a {w}x{h} image")));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::param(format!("noise sigma must be finite and nonnegative, got {sigma}")));
    }
    let mut rng = seeded_rng(seed);
    let mut placed: Vec<(usize, usize)> = Vec::with_capacity(holes);
    let mut tries = 0;
    while placed.len() < holes {
        tries += 1;
        if tries > 10_000 {
            return Err(Error::param(format!("cannot place {holes} separate {hole_size}x{hole_size} holes in {w}x{h}")));
        }
        let (x, y) = (rng.random_range(0..=w - hole_size), rng.random_range(0..=h - hole_size));
        let apart = |&(px, py): &(usize, usize)| x > px + hole_size || px > x + hole_size || y > py + hole_size || py > y + hole_size;
        if placed.iter().all(apart) {
            placed.push((x, y));
        }
    }
    let mut mask = PixelMask::all_observed(w, h);
    for &(x0, y0) in &placed {
        for y in y0..y0 + hole_size {
            for x in x0..x0 + hole_size {
                mask.set(x, y, false);
            }
        }
    }
    let noise = Normal::new(0.0, sigma).expect("validated sigma");
    let mut out = clean.clone();
    for (i, v) in out.values_mut().iter_mut().enumerate() {
        *v = if mask.flags()[i] { *v + T::lit(noise.sample(&mut rng)) } else { T::zero() };
    }
    Ok((out, mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spread(p: &Patch<f64>) -> f64 {
        let v = p.values();
        v.iter().copied().fold(f64::MIN, f64::max) - v.iter().copied().fold(f64::MAX, f64::min)
    }

    #[test]
    fn all_flat() {
        let spec = SyntheticSpec { flat_prob: 1.0, ..SyntheticSpec::default() };
        for p in generate_synthetic::<f64>(&spec, 200).unwrap() {
            assert!(spread(&p.disparity) < 12.0 * spec.noise_floor);
            assert!(p.disparity_edge.is_none());
        }
    }

    #[test]
    fn coupled_edges_share_geometry() {
        let spec = SyntheticSpec { flat_prob: 0.0, rho: 1.0, ..SyntheticSpec::default() };
        for p in generate_synthetic::<f64>(&spec, 200).unwrap() {
            assert!(p.disparity_edge.is_some());
            assert_eq!(p.intensity_edge, p.disparity_edge);
        }
    }

    #[test]
    fn edges_have_two_plateaus() {
        let spec = SyntheticSpec { flat_prob: 0.0, noise_floor: 0.0, ..SyntheticSpec::default() };
        for p in generate_synthetic::<f64>(&spec, 100).unwrap() {
            let mut v: Vec<f64> = p.disparity.values().to_vec();
            v.sort_by(f64::total_cmp);
            v.dedup();
            assert_eq!(v.len(), 2);
        }
    }

    #[test]
    fn holes_are_separate_components() {
        let img = ImageGrid::filled(64, 64, 0.5, Channel::Disparity);
        let (noisy, mask) = corrupt_image(&img, 3, 12, 0.0, 9).unwrap();
        assert_eq!(mask.hidden_count(), 3 * 144);
        let holes = crate::pipeline::find_holes(&mask, 64);
        assert_eq!(holes.len(), 3);
        assert!(holes.iter().all(|h| h.large));
        assert!(noisy.values().iter().zip(mask.flags()).all(|(&v, &o)| if o { v == 0.5 } else { v == 0.0 }));
    }

    #[test]
    fn image_is_deterministic() {
        let spec = SyntheticImageSpec { width: 32, height: 24, ..SyntheticImageSpec::default() };
        let a = generate_synthetic_image::<f64>(&spec).unwrap();
        assert_eq!(a, generate_synthetic_image::<f64>(&spec).unwrap());
        assert_eq!((a.disparity.width(), a.disparity.height()), (32, 24));
    }
}
