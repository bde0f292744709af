use super::{ImagePatch, NetError};

/// Element of the dihedral group of the square: an optional horizontal flip
/// followed by `quarter_turns` clockwise rotations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct D4 {
    pub quarter_turns: u8,
    pub flip: bool,
}

impl D4 {
    pub const IDENTITY: D4 = D4 { quarter_turns: 0, flip: false };

    /// `identity, rot90, rot180, rot270`, then the same four after a flip.
    pub const ALL: [D4; 8] = [
        D4 { quarter_turns: 0, flip: false },
        D4 { quarter_turns: 1, flip: false },
        D4 { quarter_turns: 2, flip: false },
        D4 { quarter_turns: 3, flip: false },
        D4 { quarter_turns: 0, flip: true },
        D4 { quarter_turns: 1, flip: true },
        D4 { quarter_turns: 2, flip: true },
        D4 { quarter_turns: 3, flip: true },
    ];

    pub fn index(self) -> usize {
        usize::from(self.flip) * 4 + usize::from(self.quarter_turns % 4)
    }

    /// `self` applied after `other`.
    pub fn compose(self, other: D4) -> D4 {
        // F R^k = R^-k F
        let k = if self.flip {
            self.quarter_turns as i32 - other.quarter_turns as i32
        } else {
            self.quarter_turns as i32 + other.quarter_turns as i32
        };
        D4 { quarter_turns: k.rem_euclid(4) as u8, flip: self.flip ^ other.flip }
    }

    pub fn inverse(self) -> D4 {
        if self.flip {
            self
        } else {
            D4 { quarter_turns: (4 - self.quarter_turns % 4) % 4, flip: false }
        }
    }

    /// Source pixel read for destination `(x, y)` on a `side`-wide square.
    #[inline]
    fn source(self, x: usize, y: usize, side: usize) -> (usize, usize) {
        // undo rotations (clockwise turn: dst(x, y) = src(y, side-1-x))
        let (mut sx, mut sy) = (x, y);
        for _ in 0..self.quarter_turns % 4 {
            (sx, sy) = (sy, side - 1 - sx);
        }
        if self.flip {
            sx = side - 1 - sx;
        }
        (sx, sy)
    }

    /// Apply to an interleaved `side x side x channels` buffer.
    pub fn apply_buffer<T: Copy>(self, data: &[T], side: usize, channels: usize) -> Vec<T> {
        debug_assert_eq!(data.len(), side * side * channels);
        let mut out = Vec::with_capacity(data.len());
        for y in 0..side {
            for x in 0..side {
                let (sx, sy) = self.source(x, y, side);
                let s = (sy * side + sx) * channels;
                out.extend_from_slice(&data[s..s + channels]);
            }
        }
        out
    }

    /// Apply to a planar `channels x side x side` buffer.
    pub fn apply_planar<T: Copy>(self, data: &[T], side: usize, channels: usize) -> Vec<T> {
        debug_assert_eq!(data.len(), side * side * channels);
        let plane = side * side;
        let mut out = Vec::with_capacity(data.len());
        for c in 0..channels {
            let src = &data[c * plane..][..plane];
            for y in 0..side {
                for x in 0..side {
                    let (sx, sy) = self.source(x, y, side);
                    out.push(src[sy * side + sx]);
                }
            }
        }
        out
    }

    pub fn apply(self, image: &ImagePatch) -> Result<ImagePatch, NetError> {
        if image.width() != image.height() {
            return Err(NetError::Image(format!(
                "dihedral transforms need a square image, got {}x{}",
                image.width(),
                image.height()
            )));
        }
        let side = image.width();
        ImagePatch::new(side, side, self.apply_buffer(image.data(), side, 3))
    }
}

/// The eight symmetries of a square image, in [`D4::ALL`] order.
pub fn augment_d4(image: &ImagePatch) -> Result<Vec<ImagePatch>, NetError> {
    D4::ALL.iter().map(|t| t.apply(image)).collect()
}
