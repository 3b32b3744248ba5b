//! Rectangular row-major grid used for map masks and cost fields.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    cells: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Validation(format!(
                "grid dimensions must be positive, got {width}x{height}"
            )));
        }
        Ok(Self {
            width,
            height,
            cells: vec![value; width * height],
        })
    }

    pub fn from_cells(width: usize, height: usize, cells: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Validation(format!(
                "grid dimensions must be positive, got {width}x{height}"
            )));
        }
        if cells.len() != width * height {
            return Err(Error::Validation(format!(
                "grid is not rectangular: {width}x{height} needs {} cells, got {}",
                width * height,
                cells.len()
            )));
        }
        Ok(Self { width, height, cells })
    }
}

impl<T> Grid<T> {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn index_of(&self, ix: usize, iy: usize) -> Option<usize> {
        (ix < self.width && iy < self.height).then(|| iy * self.width + ix)
    }

    pub fn coords_of(&self, index: usize) -> (usize, usize) {
        (index % self.width, index / self.width)
    }

    pub fn get(&self, ix: usize, iy: usize) -> Option<&T> {
        self.index_of(ix, iy).map(|i| &self.cells[i])
    }

    pub fn at(&self, index: usize) -> &T {
        &self.cells[index]
    }

    pub fn at_mut(&mut self, index: usize) -> &mut T {
        &mut self.cells[index]
    }

    pub fn cells(&self) -> &[T] {
        &self.cells
    }

    pub fn cells_mut(&mut self) -> &mut [T] {
        &mut self.cells
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_shapes() {
        assert!(Grid::<bool>::filled(0, 4, false).is_err());
        assert!(Grid::from_cells(2, 2, vec![1u8, 2, 3]).is_err());
    }

    #[test]
    fn row_major_indexing() {
        let mut g = Grid::filled(3, 2, 0i32).unwrap();
        *g.at_mut(g.index_of(2, 1).unwrap()) = 7;
        assert_eq!(g.cells()[5], 7);
        assert_eq!(g.coords_of(5), (2, 1));
        assert_eq!(g.get(3, 0), None);
        assert_eq!(g.get(0, 2), None);
    }
}
