use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LocalizeError;

pub const DEFAULT_SPEED_OF_SOUND: f64 = 343.0;

/// Side of the default square four-mic array, metres.
pub const DEFAULT_ARRAY_SIDE: f64 = 0.0457;

pub type Point = [f64; 3];

pub fn distance(a: &Point, b: &Point) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Ordered microphone positions (metres) and the speed of sound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GeometryFile", into = "GeometryFile")]
pub struct MicArrayGeometry {
    positions: Vec<Point>,
    speed_of_sound: f64,
}

/// On-disk form: 2-D or 3-D coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct GeometryFile {
    #[serde(default = "default_speed")]
    speed_of_sound: f64,
    positions: Vec<Vec<f64>>,
}

fn default_speed() -> f64 {
    DEFAULT_SPEED_OF_SOUND
}

impl TryFrom<GeometryFile> for MicArrayGeometry {
    type Error = LocalizeError;

    fn try_from(file: GeometryFile) -> Result<Self, Self::Error> {
        let positions = file
            .positions
            .iter()
            .map(|p| match p.as_slice() {
                [x, y] => Ok([*x, *y, 0.0]),
                [x, y, z] => Ok([*x, *y, *z]),
                _ => Err(LocalizeError::InvalidGeometry(format!(
                    "position needs 2 or 3 coordinates, got {}",
                    p.len()
                ))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        MicArrayGeometry::new(positions, file.speed_of_sound)
    }
}

impl From<MicArrayGeometry> for GeometryFile {
    fn from(g: MicArrayGeometry) -> Self {
        GeometryFile {
            speed_of_sound: g.speed_of_sound,
            positions: g.positions.iter().map(|p| p.to_vec()).collect(),
        }
    }
}

impl MicArrayGeometry {
    pub fn new(positions: Vec<Point>, speed_of_sound: f64) -> Result<Self, LocalizeError> {
        if positions.len() < 2 {
            return Err(LocalizeError::InvalidGeometry(
                "need at least two microphones".into(),
            ));
        }
        if !(speed_of_sound > 0.0 && speed_of_sound.is_finite()) {
            return Err(LocalizeError::InvalidGeometry(
                "speed of sound must be positive".into(),
            ));
        }
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(LocalizeError::InvalidGeometry("non-finite coordinate".into()));
        }
        for i in 0..positions.len() {
            for j in i + 1..positions.len() {
                if distance(&positions[i], &positions[j]) == 0.0 {
                    return Err(LocalizeError::InvalidGeometry(format!(
                        "microphones {i} and {j} coincide"
                    )));
                }
            }
        }
        Ok(Self {
            positions,
            speed_of_sound,
        })
    }

    /// Square array of side `side` centred on the origin, mics counter-clockwise
    /// from the (+x, +y) corner.
    pub fn square(side: f64, speed_of_sound: f64) -> Result<Self, LocalizeError> {
        let h = side / 2.0;
        Self::new(
            vec![[h, h, 0.0], [-h, h, 0.0], [-h, -h, 0.0], [h, -h, 0.0]],
            speed_of_sound,
        )
    }

    pub fn default_square() -> Self {
        Self::square(DEFAULT_ARRAY_SIDE, DEFAULT_SPEED_OF_SOUND).expect("valid default array")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, LocalizeError> {
        toml::from_str(text).map_err(|e| LocalizeError::InvalidGeometry(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LocalizeError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| LocalizeError::InvalidGeometry(e.to_string()))?;
        Self::from_toml_str(&text)
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn position(&self, i: usize) -> &Point {
        &self.positions[i]
    }

    pub fn num_mics(&self) -> usize {
        self.positions.len()
    }

    pub fn speed_of_sound(&self) -> f64 {
        self.speed_of_sound
    }

    pub fn baseline(&self, i: usize, j: usize) -> f64 {
        distance(&self.positions[i], &self.positions[j])
    }

    /// Largest pairwise spacing.
    pub fn aperture(&self) -> f64 {
        self.pairs()
            .map(|(i, j)| self.baseline(i, j))
            .fold(0.0, f64::max)
    }

    pub fn centroid(&self) -> Point {
        let n = self.positions.len() as f64;
        let mut c = [0.0; 3];
        for p in &self.positions {
            for d in 0..3 {
                c[d] += p[d] / n;
            }
        }
        c
    }

    /// All pairs `(i, j)` with `i < j`, in lexicographic order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.positions.len();
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
    }

    /// Arrival-time difference `t_j − t_i` for a point source at `source`.
    pub fn model_delay(&self, source: &Point, i: usize, j: usize) -> f64 {
        (distance(source, &self.positions[j]) - distance(source, &self.positions[i]))
            / self.speed_of_sound
    }

    /// Arrival-time difference `t_j − t_i` for a plane wave travelling
    /// from direction `u` (unit vector towards the source).
    pub fn plane_wave_delay(&self, u: &Point, i: usize, j: usize) -> f64 {
        let (pi, pj) = (&self.positions[i], &self.positions[j]);
        (0..3).map(|d| (pi[d] - pj[d]) * u[d]).sum::<f64>() / self.speed_of_sound
    }
}
