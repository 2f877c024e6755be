//! Row-major 2D grid used for semantic masks and the shadowing field.

/// Dense 2D grid, row-major, indexed as (row, col) = (y cell, x cell).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Copy + Default> Grid<T> {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![T::default(); width * height],
        }
    }
}

impl<T: Copy> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height, "grid data length mismatch");
        Self {
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

    pub fn get(&self, row: usize, col: usize) -> T {
        debug_assert!(row < self.height && col < self.width);
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: T) {
        debug_assert!(row < self.height && col < self.width);
        self.data[row * self.width + col] = value;
    }

    pub fn in_bounds(&self, row: i64, col: i64) -> bool {
        row >= 0 && col >= 0 && (row as usize) < self.height && (col as usize) < self.width
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Iterate over (row, col, value).
    pub fn iter_cells(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .map(move |(i, &v)| (i / w, i % w, v))
    }
}

impl Grid<u8> {
    /// Number of set (nonzero) cells.
    pub fn count_set(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// True if any cell is set in both grids.
    pub fn intersects(&self, other: &Grid<u8>) -> bool {
        self.data
            .iter()
            .zip(other.data.iter())
            .any(|(&a, &b)| a != 0 && b != 0)
    }

    /// Morphological dilation by a Chebyshev radius.
    pub fn dilate(&self, radius: usize) -> Grid<u8> {
        let r = radius as i64;
        let mut out = Grid::new(self.width, self.height);
        for row in 0..self.height as i64 {
            for col in 0..self.width as i64 {
                'scan: for dr in -r..=r {
                    for dc in -r..=r {
                        if self.in_bounds(row + dr, col + dc)
                            && self.get((row + dr) as usize, (col + dc) as usize) != 0
                        {
                            out.set(row as usize, col as usize, 1);
                            break 'scan;
                        }
                    }
                }
            }
        }
        out
    }
}

impl Grid<f64> {
    /// Bilinear sample at world-cell coordinates (col units along x, row
    /// units along y), with values anchored at cell centers and zero outside
    /// the grid.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let fx = x - 0.5;
        let fy = y - 0.5;
        let c0 = fx.floor();
        let r0 = fy.floor();
        let tx = fx - c0;
        let ty = fy - r0;
        let mut acc = 0.0;
        for (dr, wr) in [(0i64, 1.0 - ty), (1, ty)] {
            for (dc, wc) in [(0i64, 1.0 - tx), (1, tx)] {
                let r = r0 as i64 + dr;
                let c = c0 as i64 + dc;
                if self.in_bounds(r, c) {
                    acc += wr * wc * self.get(r as usize, c as usize);
                }
            }
        }
        acc
    }
}
