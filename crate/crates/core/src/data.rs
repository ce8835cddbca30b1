/// Borrowed view of paired designs (`len × dim`, row-major) and scores.
#[derive(Debug, Clone, Copy)]
pub struct DataView<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub dim: usize,
}

impl<'a> DataView<'a> {
    pub fn new(x: &'a [f64], y: &'a [f64], dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        assert_eq!(x.len(), y.len() * dim, "designs and scores disagree on row count");
        DataView { x, y, dim }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
