use crate::error::{Error, Result};
use crate::geometry::{ImageFrame, PixelCoord, Vec3};

/// Row-major `width x height` grid, row 0 at the top.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Grid {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "grid {width}x{height} needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Grid {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(col, row));
            }
        }
        Grid {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn frame(&self) -> ImageFrame {
        ImageFrame::new(self.width, self.height)
    }

    pub fn same_size<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    #[inline]
    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> &T {
        &self.data[row * self.width + col]
    }

    #[inline]
    pub fn get_mut(&mut self, col: usize, row: usize) -> &mut T {
        &mut self.data[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, value: T) {
        self.data[row * self.width + col] = value;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    /// Row slice.
    pub fn row(&self, row: usize) -> &[T] {
        &self.data[row * self.width..(row + 1) * self.width]
    }
}

/// Object mask, `true` on object pixels.
pub type Mask = Grid<bool>;
/// Per-pixel depth `z` (world units); `0.0` marks pixels outside the mask.
pub type DepthMap = Grid<f64>;
/// Per-pixel unit normals, camera frame unless stated otherwise.
pub type NormalMap = Grid<Vec3>;
/// Intensities in `[0, 1]`.
pub type IntensityImage = Grid<f64>;

impl Grid<bool> {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty_mask(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    /// Whether the nearest pixel to `p` is inside the grid and set.
    pub fn contains(&self, p: &PixelCoord) -> bool {
        p.nearest_pixel(self.width, self.height)
            .map(|(c, r)| *self.get(c, r))
            .unwrap_or(false)
    }

    /// Iterates `(col, row)` of set pixels in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % w, i / w))
    }
}

/// Summary statistics of a scalar grid over a mask.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaskedStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub count: usize,
}

pub fn masked_stats(values: &Grid<f64>, mask: &Mask) -> Option<MaskedStats> {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    let mut count = 0;
    for (v, &m) in values.data().iter().zip(mask.data()) {
        if m {
            min = min.min(*v);
            max = max.max(*v);
            sum += v;
            count += 1;
        }
    }
    (count > 0).then(|| MaskedStats {
        min,
        max,
        mean: sum / count as f64,
        count,
    })
}

/// Bilinear sample at fractional `(col, row)`. `None` outside
/// `[0, w-1] x [0, h-1]`.
pub fn bilinear(grid: &Grid<f64>, col: f64, row: f64) -> Option<f64> {
    let (w, h) = (grid.width() as f64, grid.height() as f64);
    if !(col >= 0.0 && row >= 0.0 && col <= w - 1.0 && row <= h - 1.0) {
        return None;
    }
    let c0 = col.floor();
    let r0 = row.floor();
    let fx = col - c0;
    let fy = row - r0;
    let c0 = c0 as usize;
    let r0 = r0 as usize;
    let c1 = (c0 + 1).min(grid.width() - 1);
    let r1 = (r0 + 1).min(grid.height() - 1);
    let v00 = *grid.get(c0, r0);
    let v10 = *grid.get(c1, r0);
    let v01 = *grid.get(c0, r1);
    let v11 = *grid.get(c1, r1);
    let top = v00 + fx * (v10 - v00);
    let bottom = v01 + fx * (v11 - v01);
    Some(top + fy * (bottom - top))
}

/// Interpolation footprint of a fractional position over masked pixels:
/// the four bilinear neighbours when all are masked, otherwise the nearest
/// pixel if it is masked.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stencil {
    pub pixels: [(usize, usize); 4],
    pub weights: [f64; 4],
    pub len: usize,
}

impl Stencil {
    pub fn at(mask: &Mask, p: PixelCoord) -> Option<Stencil> {
        let (w, h) = (mask.width() as f64, mask.height() as f64);
        if p.col >= 0.0 && p.row >= 0.0 && p.col <= w - 1.0 && p.row <= h - 1.0 {
            let c0 = p.col.floor();
            let r0 = p.row.floor();
            let (fx, fy) = (p.col - c0, p.row - r0);
            let (c0, r0) = (c0 as usize, r0 as usize);
            let c1 = (c0 + 1).min(mask.width() - 1);
            let r1 = (r0 + 1).min(mask.height() - 1);
            let pixels = [(c0, r0), (c1, r0), (c0, r1), (c1, r1)];
            if pixels.iter().all(|&(c, r)| *mask.get(c, r)) {
                return Some(Stencil {
                    pixels,
                    weights: [
                        (1.0 - fx) * (1.0 - fy),
                        fx * (1.0 - fy),
                        (1.0 - fx) * fy,
                        fx * fy,
                    ],
                    len: 4,
                });
            }
        }
        let (c, r) = p.nearest_pixel(mask.width(), mask.height())?;
        mask.get(c, r).then_some(Stencil {
            pixels: [(c, r); 4],
            weights: [1.0, 0.0, 0.0, 0.0],
            len: 1,
        })
    }

    pub fn taps(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.pixels[..self.len]
            .iter()
            .copied()
            .zip(self.weights[..self.len].iter().copied())
    }

    /// Depth interpolated linearly in `1/z`, which is exact for planes seen
    /// through a pinhole camera.
    pub fn inverse_depth(&self, depth: &Grid<f64>) -> f64 {
        let inv: f64 = self.taps().map(|((c, r), w)| w / depth.get(c, r)).sum();
        1.0 / inv
    }
}

/// Grid of horizontal displacements on the rectified image.
///
/// `score` holds the matching score of each valid displacement (1.0 for
/// displacements that did not come from a matcher).
#[derive(Clone, Debug, PartialEq)]
pub struct Flow1D {
    pub values: Grid<f64>,
    pub valid: Mask,
    pub score: Grid<f64>,
}

impl Flow1D {
    pub fn empty(width: usize, height: usize) -> Self {
        Flow1D {
            values: Grid::filled(width, height, 0.0),
            valid: Grid::filled(width, height, false),
            score: Grid::filled(width, height, 0.0),
        }
    }

    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }

    pub fn set(&mut self, col: usize, row: usize, value: f64, score: f64) {
        self.values.set(col, row, value);
        self.valid.set(col, row, true);
        self.score.set(col, row, score);
    }

    pub fn get(&self, col: usize, row: usize) -> Option<f64> {
        self.valid.get(col, row).then(|| *self.values.get(col, row))
    }

    pub fn valid_count(&self) -> usize {
        self.valid.count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(Grid::from_vec(3, 2, vec![0.0; 5]).is_err());
        let g = Grid::from_vec(3, 2, (0..6).map(|i| i as f64).collect()).unwrap();
        assert_eq!(*g.get(2, 1), 5.0);
        assert_eq!(g.row(1), &[3.0, 4.0, 5.0]);
    }

    #[test]
    fn bilinear_is_exact_on_integers_and_linear_between() {
        let g = Grid::from_fn(4, 3, |c, r| (c * 10 + r) as f64);
        assert_eq!(bilinear(&g, 2.0, 1.0), Some(21.0));
        assert!((bilinear(&g, 1.5, 0.5).unwrap() - 15.5).abs() < 1e-12);
        assert_eq!(bilinear(&g, 3.0, 2.0), Some(32.0));
        assert_eq!(bilinear(&g, 3.01, 0.0), None);
        assert_eq!(bilinear(&g, -0.01, 0.0), None);
    }

    #[test]
    fn mask_pixels_iterate_row_major() {
        let mut m = Grid::filled(3, 2, false);
        m.set(2, 0, true);
        m.set(0, 1, true);
        assert_eq!(m.pixels().collect::<Vec<_>>(), vec![(2, 0), (0, 1)]);
        assert_eq!(m.count(), 2);
        assert!(m.contains(&PixelCoord::new(1.6, 0.2)));
        assert!(!m.contains(&PixelCoord::new(1.4, 0.2)));
    }

    #[test]
    fn masked_stats_ignore_background() {
        let v = Grid::from_vec(2, 2, vec![1.0, 100.0, 3.0, 5.0]).unwrap();
        let m = Grid::from_vec(2, 2, vec![true, false, true, true]).unwrap();
        let s = masked_stats(&v, &m).unwrap();
        assert_eq!((s.min, s.max, s.mean, s.count), (1.0, 5.0, 3.0, 3));
        assert!(masked_stats(&v, &Grid::filled(2, 2, false)).is_none());
    }

    #[test]
    fn stencil_falls_back_to_nearest_masked_pixel() {
        let mut m = Grid::filled(4, 4, true);
        let s = Stencil::at(&m, PixelCoord::new(1.25, 2.5)).unwrap();
        assert_eq!(s.len, 4);
        assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        m.set(2, 3, false);
        let s = Stencil::at(&m, PixelCoord::new(1.25, 2.5)).unwrap();
        assert_eq!((s.len, s.pixels[0]), (1, (1, 3)));
        m.set(1, 3, false);
        assert!(Stencil::at(&m, PixelCoord::new(1.25, 2.6)).is_none());
    }

    #[test]
    fn inverse_depth_interpolation_is_exact_on_planes() {
        // plane z = 1 / (a x + b y + c) in pixel coordinates
        let depth = Grid::from_fn(5, 5, |c, r| 1.0 / (0.1 * c as f64 + 0.05 * r as f64 + 0.4));
        let m = Grid::filled(5, 5, true);
        let p = PixelCoord::new(2.3, 1.7);
        let z = Stencil::at(&m, p).unwrap().inverse_depth(&depth);
        assert!((z - 1.0 / (0.1 * 2.3 + 0.05 * 1.7 + 0.4)).abs() < 1e-14);
    }
}
