use crate::format::{decode, Fp8Format, Fp8Value};
use crate::Error;

/// Row-major binary32 tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

fn check_shape(shape: &[usize], len: usize) -> Result<(), Error> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::BadShape(format!("shape {shape:?} must have rank >= 1 and positive dims")));
    }
    let count = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
    if count != Some(len) {
        return Err(Error::BadShape(format!("shape {shape:?} does not hold {len} elements")));
    }
    Ok(())
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, Error> {
        check_shape(&shape, data.len())?;
        Ok(Tensor { shape, data })
    }

    pub fn from_vec(data: Vec<f32>) -> Result<Self, Error> {
        Self::new(vec![data.len()], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn layout(&self, axis: usize) -> Result<ChannelLayout, Error> {
        ChannelLayout::new(&self.shape, axis)
    }

    /// Elements of channel `c` along `axis`, in row-major order.
    pub fn channel(&self, layout: ChannelLayout, c: usize) -> impl Iterator<Item = f32> + '_ {
        (0..layout.outer).flat_map(move |o| {
            let start = (o * layout.extent + c) * layout.inner;
            self.data[start..start + layout.inner].iter().copied()
        })
    }
}

/// Index arithmetic for slicing a row-major tensor along one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelLayout {
    pub outer: usize,
    pub extent: usize,
    pub inner: usize,
}

impl ChannelLayout {
    pub fn new(shape: &[usize], axis: usize) -> Result<Self, Error> {
        if axis >= shape.len() {
            return Err(Error::AxisOutOfRange { axis, rank: shape.len() });
        }
        Ok(ChannelLayout {
            outer: shape[..axis].iter().product(),
            extent: shape[axis],
            inner: shape[axis + 1..].iter().product(),
        })
    }

    pub fn channel_of(&self, flat_index: usize) -> usize {
        (flat_index / self.inner) % self.extent
    }
}

/// Raw FP8 bytes with a shape and format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fp8Tensor {
    shape: Vec<usize>,
    format: Fp8Format,
    bytes: Vec<u8>,
}

impl Fp8Tensor {
    pub fn new(shape: Vec<usize>, format: Fp8Format, bytes: Vec<u8>) -> Result<Self, Error> {
        check_shape(&shape, bytes.len())?;
        Ok(Fp8Tensor { shape, format, bytes })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn format(&self) -> Fp8Format {
        self.format
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn values(&self) -> impl Iterator<Item = Fp8Value> + '_ {
        self.bytes.iter().map(|&b| Fp8Value::new(b, self.format))
    }

    /// Exact widening of every element, without unscaling.
    pub fn decode(&self) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.values().map(decode).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_checks() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![], vec![]).is_err());
        assert!(Tensor::new(vec![0], vec![]).is_err());
    }

    #[test]
    fn channel_slicing() {
        let t = Tensor::new(vec![2, 3, 2], (0..12).map(|i| i as f32).collect()).unwrap();
        let l = t.layout(1).unwrap();
        assert_eq!(t.channel(l, 1).collect::<Vec<_>>(), vec![2.0, 3.0, 8.0, 9.0]);
        assert_eq!(l.channel_of(9), 1);
        let l0 = t.layout(0).unwrap();
        assert_eq!(t.channel(l0, 1).count(), 6);
        assert!(t.layout(3).is_err());
    }
}
