use rand::Rng;

use crate::data::SegmentationSample;
use crate::tensor::Tensor;

/// A right-angle rotation followed by optional flips.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Transform {
    /// Counter-clockwise quarter turns, 0..=3.
    pub quarter_turns: u8,
    pub flip_h: bool,
    pub flip_v: bool,
}

impl Transform {
    pub const IDENTITY: Transform = Transform {
        quarter_turns: 0,
        flip_h: false,
        flip_v: false,
    };

    /// Uniform over the four rotations, each flip with probability 1/2.
    /// Non-square images only draw 0 or 180 degrees so their shape survives.
    pub fn sample(rng: &mut impl Rng, square: bool) -> Self {
        let turns = rng.random_range(0..4u8);
        Transform {
            quarter_turns: if square { turns } else { turns & 2 },
            flip_h: rng.random_bool(0.5),
            flip_v: rng.random_bool(0.5),
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    /// Applies the transform to every `(n, c)` plane.
    pub fn apply(&self, t: &Tensor) -> Tensor {
        let [n, c, h, w] = t.shape();
        let turns = self.quarter_turns % 4;
        let (oh, ow) = if turns % 2 == 1 { (w, h) } else { (h, w) };
        Tensor::from_fn([n, c, oh, ow], |ni, ci, y, x| {
            let (mut y, mut x) = (y, x);
            if self.flip_v {
                y = oh - 1 - y;
            }
            if self.flip_h {
                x = ow - 1 - x;
            }
            // (y, x) is a position in the rotated frame; map back to the source.
            let (sy, sx) = match turns {
                0 => (y, x),
                1 => (x, w - 1 - y),
                2 => (h - 1 - y, w - 1 - x),
                _ => (h - 1 - x, y),
            };
            t.get(ni, ci, sy, sx)
        })
    }
}

/// Draws one transform and applies it to image and mask alike.
pub fn augment(sample: &SegmentationSample, rng: &mut impl Rng) -> SegmentationSample {
    let square = sample.height() == sample.width();
    let tf = Transform::sample(rng, square);
    if tf.is_identity() {
        return sample.clone();
    }
    SegmentationSample {
        id: sample.id.clone(),
        image: tf.apply(&sample.image),
        mask: tf.apply(&sample.mask),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> Tensor {
        Tensor::from_fn([1, 1, 3, 3], |_, _, y, x| (y * 3 + x) as f32)
    }

    #[test]
    fn quarter_turn_is_counter_clockwise() {
        let r = Transform {
            quarter_turns: 1,
            ..Transform::IDENTITY
        }
        .apply(&ramp());
        // top row of a CCW rotation is the former right column
        assert_eq!(&r.data()[..3], &[2.0, 5.0, 8.0]);
    }

    #[test]
    fn four_turns_and_double_half_turn_are_identity() {
        let t = ramp();
        let q = Transform {
            quarter_turns: 1,
            ..Transform::IDENTITY
        };
        let mut r = t.clone();
        for _ in 0..4 {
            r = q.apply(&r);
        }
        assert_eq!(r, t);
        let half = Transform {
            quarter_turns: 2,
            ..Transform::IDENTITY
        };
        assert_eq!(half.apply(&half.apply(&t)), t);
        assert_eq!(Transform::IDENTITY.apply(&t), t);
    }

    #[test]
    fn non_square_keeps_shape() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            assert_eq!(Transform::sample(&mut rng, false).quarter_turns % 2, 0);
        }
    }
}
