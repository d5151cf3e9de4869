/// Padded array layout shared by all six field components.
///
/// Logical indices run from -1 to n+1 along each axis (one ghost plane on
/// either side); storage index of `(i, j, k)` is
/// `(i+1)*sx + (j+1)*sy + (k+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n: [usize; 3],
    pub padded: [usize; 3],
    pub sx: usize,
    pub sy: usize,
}

impl Layout {
    pub fn new(n: [usize; 3]) -> Self {
        let padded = [n[0] + 3, n[1] + 3, n[2] + 3];
        Layout {
            n,
            padded,
            sx: padded[1] * padded[2],
            sy: padded[2],
        }
    }

    pub fn len(&self) -> usize {
        self.padded[0] * self.sx
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> usize {
        (i + 1) * self.sx + (j + 1) * self.sy + k + 1
    }

    /// Storage index for a possibly negative (ghost) logical index.
    #[inline]
    pub fn at_signed(&self, i: isize, j: isize, k: isize) -> usize {
        ((i + 1) as usize) * self.sx + ((j + 1) as usize) * self.sy + (k + 1) as usize
    }

    pub fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => self.sx,
            1 => self.sy,
            _ => 1,
        }
    }
}

/// The six Yee-grid field components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Component {
    Ex,
    Ey,
    Ez,
    Hx,
    Hy,
    Hz,
}

impl Component {
    pub const ALL: [Component; 6] = [
        Component::Ex,
        Component::Ey,
        Component::Ez,
        Component::Hx,
        Component::Hy,
        Component::Hz,
    ];

    pub fn is_electric(self) -> bool {
        matches!(self, Component::Ex | Component::Ey | Component::Ez)
    }

    pub fn axis(self) -> usize {
        match self {
            Component::Ex | Component::Hx => 0,
            Component::Ey | Component::Hy => 1,
            Component::Ez | Component::Hz => 2,
        }
    }

    pub fn electric(axis: usize) -> Self {
        [Component::Ex, Component::Ey, Component::Ez][axis]
    }

    pub fn magnetic(axis: usize) -> Self {
        [Component::Hx, Component::Hy, Component::Hz][axis]
    }

    pub fn name(self) -> &'static str {
        match self {
            Component::Ex => "Ex",
            Component::Ey => "Ey",
            Component::Ez => "Ez",
            Component::Hx => "Hx",
            Component::Hy => "Hy",
            Component::Hz => "Hz",
        }
    }

    /// Half-cell offsets of this component from its node, per axis.
    pub fn stagger(self) -> [f64; 3] {
        let a = self.axis();
        let mut s = if self.is_electric() { [0.0; 3] } else { [0.5; 3] };
        s[a] = if self.is_electric() { 0.5 } else { 0.0 };
        s
    }

    /// Whether the component is staggered (half-integer) along `axis`.
    pub fn staggered_along(self, axis: usize) -> bool {
        self.stagger()[axis] != 0.0
    }

    /// Exclusive upper bound of valid logical indices along `axis`.
    pub fn extent(self, n: [usize; 3], axis: usize) -> usize {
        if self.staggered_along(axis) {
            n[axis]
        } else {
            n[axis] + 1
        }
    }

    pub fn valid(self, n: [usize; 3], ijk: [usize; 3]) -> bool {
        (0..3).all(|d| ijk[d] < self.extent(n, d))
    }
}

impl std::str::FromStr for Component {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Component::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown field component `{s}`"))
    }
}
