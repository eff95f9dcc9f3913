//! Per-channel keypoints and descriptors from a dense activation volume.
//!
//! Every channel of a `W x H x C` tensor contributes exactly one keypoint: the
//! cell where that channel fires hardest. The descriptor at a keypoint is the
//! `C`-vector read through all channels at that cell.

use crate::error::{Result, VprError};
use crate::scalar::Scalar;

/// Dense `W x H x C` activation volume stored channel-major, then row, then
/// column: the value for `(channel k, row y, column x)` lives at
/// `(k * H + y) * W + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTensor<T> {
    width: usize,
    height: usize,
    channels: usize,
    values: Vec<T>,
}

impl<T: Scalar> ActivationTensor<T> {
    pub fn new(width: usize, height: usize, channels: usize, values: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(VprError::structure(format!(
                "tensor dimensions must be positive, got {width}x{height}x{channels}"
            )));
        }
        let expected = width * height * channels;
        if values.len() != expected {
            return Err(VprError::structure(format!(
                "tensor {width}x{height}x{channels} needs {expected} values, got {}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(VprError::structure(format!(
                "non-finite tensor value at linear index {pos}"
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn get(&self, channel: usize, y: usize, x: usize) -> T {
        self.values[(channel * self.height + y) * self.width + x]
    }

    /// The `W * H` plane of a single channel, row-major.
    pub fn channel_plane(&self, channel: usize) -> &[T] {
        let plane = self.width * self.height;
        &self.values[channel * plane..(channel + 1) * plane]
    }
}

/// Location of the single keypoint a channel contributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Keypoint {
    pub channel: usize,
    pub x: u32,
    pub y: u32,
}

/// A `C`-dimensional descriptor vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Descriptor<T>(pub Vec<T>);

impl<T: Scalar> Descriptor<T> {
    pub fn zeros(len: usize) -> Self {
        Descriptor(vec![T::zero(); len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }
}

impl<T> From<Vec<T>> for Descriptor<T> {
    fn from(values: Vec<T>) -> Self {
        Descriptor(values)
    }
}

/// One keypoint per channel at the channel's maximum. Ties go to the smallest
/// row-major index `y * W + x`.
pub fn extract_keypoints<T: Scalar>(tensor: &ActivationTensor<T>) -> Vec<Keypoint> {
    (0..tensor.channels())
        .map(|channel| {
            let plane = tensor.channel_plane(channel);
            let mut best = 0usize;
            for (idx, &v) in plane.iter().enumerate().skip(1) {
                // strict: earlier index wins ties
                if v > plane[best] {
                    best = idx;
                }
            }
            Keypoint {
                channel,
                x: (best % tensor.width()) as u32,
                y: (best / tensor.width()) as u32,
            }
        })
        .collect()
}

pub fn descriptor_at<T: Scalar>(
    tensor: &ActivationTensor<T>,
    x: usize,
    y: usize,
) -> Result<Descriptor<T>> {
    if x >= tensor.width() || y >= tensor.height() {
        return Err(VprError::OutOfBounds {
            x: x as i64,
            y: y as i64,
            width: tensor.width(),
            height: tensor.height(),
        });
    }
    Ok(Descriptor(
        (0..tensor.channels()).map(|k| tensor.get(k, y, x)).collect(),
    ))
}

/// Keypoints and their descriptors for every channel, in channel order.
pub fn extract_features<T: Scalar>(
    tensor: &ActivationTensor<T>,
) -> (Vec<Keypoint>, Vec<Descriptor<T>>) {
    let keypoints = extract_keypoints(tensor);
    let descriptors = keypoints
        .iter()
        .map(|kp| {
            descriptor_at(tensor, kp.x as usize, kp.y as usize)
                .expect("extracted keypoints are in bounds")
        })
        .collect();
    (keypoints, descriptors)
}

/// `1 - cos(a, b)`, clamped to `[0, 2]`. A zero-norm side yields 1.0.
pub fn cosine_distance<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(VprError::structure(format!(
            "descriptor lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(cosine_distance_unchecked(a, b))
}

#[inline]
pub(crate) fn cosine_distance_unchecked<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut dot = T::zero();
    let mut na = T::zero();
    let mut nb = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        dot = dot + x * y;
        na = na + x * x;
        nb = nb + y * y;
    }
    if na == T::zero() || nb == T::zero() {
        return T::one();
    }
    // sqrt(na * nb) is exact for na == nb, so identical vectors give exactly 0
    let norm = (na * nb).sqrt();
    let norm = if norm.is_finite() { norm } else { na.sqrt() * nb.sqrt() };
    let d = T::one() - dot / norm;
    d.max(T::zero()).min(T::of(2.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(w: usize, h: usize, c: usize, values: Vec<f64>) -> ActivationTensor<f64> {
        ActivationTensor::new(w, h, c, values).unwrap()
    }

    #[test]
    fn single_cell_tensor_yields_origin_for_every_channel() {
        let t = tensor(1, 1, 4, vec![0.3, -2.0, 7.0, 0.0]);
        let kps = extract_keypoints(&t);
        assert_eq!(kps.len(), 4);
        for (k, kp) in kps.iter().enumerate() {
            assert_eq!(*kp, Keypoint { channel: k, x: 0, y: 0 });
        }
    }

    #[test]
    fn strict_maximum_found() {
        let mut v = vec![0.0; 9];
        v[1 * 3 + 2] = 5.0;
        v[0] = 4.9;
        let kps = extract_keypoints(&tensor(3, 3, 1, v));
        assert_eq!((kps[0].x, kps[0].y), (2, 1));
    }

    #[test]
    fn flat_channel_breaks_tie_at_first_index() {
        let kps = extract_keypoints(&tensor(2, 2, 1, vec![1.5; 4]));
        assert_eq!((kps[0].x, kps[0].y), (0, 0));
    }

    #[test]
    fn later_tie_does_not_displace_earlier() {
        // maxima at (1,0) and (0,1): linear indices 1 and 2
        let kps = extract_keypoints(&tensor(2, 2, 1, vec![0.0, 3.0, 3.0, 1.0]));
        assert_eq!((kps[0].x, kps[0].y), (1, 0));
    }

    #[test]
    fn malformed_tensors_rejected() {
        assert!(matches!(
            ActivationTensor::<f64>::new(2, 2, 2, vec![0.0; 7]),
            Err(VprError::Structure(_))
        ));
        assert!(matches!(
            ActivationTensor::new(1, 1, 2, vec![0.0, f64::NAN]),
            Err(VprError::Structure(_))
        ));
        assert!(ActivationTensor::new(1, 1, 1, vec![f64::INFINITY]).is_err());
        assert!(ActivationTensor::<f32>::new(0, 1, 1, vec![]).is_err());
    }

    #[test]
    fn descriptor_gathers_across_channels() {
        let t = tensor(1, 1, 3, vec![1.0, 2.0, 3.0]);
        assert_eq!(descriptor_at(&t, 0, 0).unwrap().0, vec![1.0, 2.0, 3.0]);

        let z = tensor(3, 2, 4, vec![0.0; 24]);
        assert_eq!(descriptor_at(&z, 2, 1).unwrap(), Descriptor::zeros(4));
    }

    #[test]
    fn descriptor_out_of_bounds() {
        let t = tensor(3, 2, 1, vec![0.0; 6]);
        assert!(matches!(
            descriptor_at(&t, 3, 0),
            Err(VprError::OutOfBounds { .. })
        ));
        assert!(descriptor_at(&t, 0, 2).is_err());
    }

    #[test]
    fn descriptor_matches_index_arithmetic_gather() {
        let (w, h, c) = (5, 4, 6);
        let values: Vec<f64> = (0..w * h * c).map(|i| (i as f64 * 0.37).sin()).collect();
        let t = tensor(w, h, c, values.clone());
        for y in 0..h {
            for x in 0..w {
                let expected: Vec<f64> = (0..c).map(|k| values[k * w * h + y * w + x]).collect();
                assert_eq!(descriptor_at(&t, x, y).unwrap().0, expected);
            }
        }
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_distance(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        let d: f64 = cosine_distance(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((d - 0.292_893_218_813_452_4).abs() < 1e-12);
        assert_eq!(cosine_distance(&[-1.0, 0.0], &[1.0, 0.0]).unwrap(), 2.0);
    }

    #[test]
    fn cosine_self_distance_is_exactly_zero() {
        let v: Vec<f64> = (0..64).map(|i| (i as f64 * 0.731).sin() * 3.7).collect();
        assert_eq!(cosine_distance(&v, &v).unwrap(), 0.0);
        let w: Vec<f32> = (0..64).map(|i| (i as f32 * 1.3).cos()).collect();
        assert_eq!(cosine_distance(&w, &w).unwrap(), 0.0);
    }

    #[test]
    fn cosine_zero_norm_is_one() {
        assert_eq!(cosine_distance(&[0.0, 0.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(cosine_distance(&[0.0f32; 3], &[0.0f32; 3]).unwrap(), 1.0);
    }

    #[test]
    fn cosine_length_mismatch() {
        assert!(matches!(
            cosine_distance(&[1.0], &[1.0, 2.0]),
            Err(VprError::Structure(_))
        ));
    }
}
