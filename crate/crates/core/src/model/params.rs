//! Named parameter storage, graph bindings and the weight checkpoint format.
//!
//! Checkpoint layout (little-endian):
//!
//! | size      | field                                   |
//! |-----------|-----------------------------------------|
//! | 4         | magic `VICW`                            |
//! | 2         | version (u16, currently 1)              |
//! | 4         | tensor count (u32)                      |
//! | per entry | name length u16, UTF-8 name, rank u8,   |
//! |           | rank × u32 extents, f64 values          |

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"VICW";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zero,
    /// Uniform with variance 2/fan_in; for layers followed by a ReLU.
    Relu(usize),
    /// Uniform with variance 1/fan_in.
    Linear(usize),
    /// Linear init scaled by 1e-2; keeps deformable offsets near zero.
    Small(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, shape: &[usize], init: Init) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            init,
        }
    }

    /// Weight and zero bias of a `k×k` conv.
    pub fn conv(prefix: &str, c_out: usize, c_in: usize, k: usize, relu: bool) -> [Self; 2] {
        let fan_in = c_in * k * k;
        let init = if relu { Init::Relu(fan_in) } else { Init::Linear(fan_in) };
        [
            Self::new(format!("{prefix}.w"), &[c_out, c_in, k, k], init),
            Self::new(format!("{prefix}.b"), &[c_out], Init::Zero),
        ]
    }

    fn sample(&self, seed: u64) -> Tensor {
        let bound = match self.init {
            Init::Zero => return Tensor::zeros(&self.shape),
            Init::Relu(f) => (6.0 / f as f64).sqrt(),
            Init::Linear(f) => (3.0 / f as f64).sqrt(),
            Init::Small(f) => 1e-2 * (3.0 / f as f64).sqrt(),
        };
        // one stream per name, so adding a parameter never reshuffles others
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(fnv1a(self.name.as_bytes()));
        Tensor::uniform(&self.shape, -bound, bound, &mut rng)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_specs(specs: &[ParamSpec], seed: u64) -> Self {
        let mut s = Self::new();
        s.add_specs(specs, seed);
        s
    }

    /// Adds the parameters that are not already present.
    pub fn add_specs(&mut self, specs: &[ParamSpec], seed: u64) {
        for spec in specs {
            if !self.params.contains_key(&spec.name) {
                self.params.insert(spec.name.clone(), spec.sample(seed));
            }
        }
    }

    /// Errors when any spec is missing or has a different shape.
    pub fn check_specs(&self, specs: &[ParamSpec]) -> Result<()> {
        for spec in specs {
            let t = self.get(&spec.name)?;
            if t.shape() != spec.shape.as_slice() {
                return Err(Error::config(format!(
                    "parameter `{}` has shape {:?}, model expects {:?}",
                    spec.name,
                    t.shape(),
                    spec.shape
                )));
            }
        }
        Ok(())
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.params.insert(name.into(), value);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .ok_or_else(|| Error::config(format!("missing parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.params
            .get_mut(name)
            .ok_or_else(|| Error::config(format!("missing parameter `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.params.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&CHECKPOINT_MAGIC);
        b.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        b.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in &self.params {
            b.extend_from_slice(&(name.len() as u16).to_le_bytes());
            b.extend_from_slice(name.as_bytes());
            b.push(t.rank() as u8);
            for &e in t.shape() {
                b.extend_from_slice(&(e as u32).to_le_bytes());
            }
            for &v in t.data() {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { b: bytes, at: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::protocol("magic", "not a weight checkpoint"));
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != CHECKPOINT_VERSION {
            return Err(Error::protocol("version", format!("unsupported checkpoint version {version}")));
        }
        let count = u32::from_le_bytes(r.array()?);
        let mut store = Self::new();
        for _ in 0..count {
            let n = u16::from_le_bytes(r.array()?) as usize;
            let name = std::str::from_utf8(r.take(n)?)
                .map_err(|_| Error::protocol("name", "parameter name is not UTF-8"))?
                .to_string();
            let rank = r.take(1)?[0] as usize;
            let shape = (0..rank)
                .map(|_| r.array().map(|a| u32::from_le_bytes(a) as usize))
                .collect::<Result<Vec<_>>>()?;
            let count: usize = shape.iter().product();
            let data = (0..count)
                .map(|_| r.array().map(f64::from_le_bytes))
                .collect::<Result<Vec<_>>>()?;
            let t = Tensor::new(&shape, data).map_err(|e| Error::protocol("shape", e.to_string()))?;
            store.params.insert(name, t);
        }
        if r.at != bytes.len() {
            return Err(Error::protocol("length", "trailing bytes after last tensor"));
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    b: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.b.len());
        let end = end.ok_or_else(|| Error::protocol("length", "checkpoint truncated"))?;
        let s = &self.b[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

/// Parameters as graph nodes for one forward pass.
#[derive(Clone, Debug, Default)]
pub struct Bindings {
    vars: BTreeMap<String, Var>,
}

impl Bindings {
    /// Every parameter becomes a trainable leaf.
    pub fn bind(g: &mut Graph, store: &ParamStore) -> Self {
        let vars = store.iter().map(|(n, t)| (n.clone(), g.leaf(t.clone()))).collect();
        Self { vars }
    }

    /// Parameters enter as constants except those in `overrides`.
    pub fn bind_with(g: &mut Graph, store: &ParamStore, overrides: &[(&str, Var)]) -> Self {
        let mut vars: BTreeMap<String, Var> = store
            .iter()
            .filter(|(n, _)| !overrides.iter().any(|(o, _)| o == n))
            .map(|(n, t)| (n.clone(), g.constant(t.clone())))
            .collect();
        for (n, v) in overrides {
            vars.insert(n.to_string(), *v);
        }
        Self { vars }
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::config(format!("missing parameter `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore {
        let mut specs = ParamSpec::conv("a", 4, 3, 3, true).to_vec();
        specs.push(ParamSpec::new("b.w", &[2, 5], Init::Linear(5)));
        ParamStore::from_specs(&specs, 9)
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let s = store();
        assert_eq!(s, store());
        let w = s.get("a.w").unwrap();
        let bound = (6.0f64 / 27.0).sqrt();
        assert!(w.data().iter().all(|v| v.abs() <= bound));
        assert_eq!(s.get("a.b").unwrap().data(), &[0.0; 4]);
        // stream per name: adding a spec leaves existing values untouched
        let mut bigger = s.clone();
        bigger.add_specs(&[ParamSpec::new("c.w", &[3], Init::Linear(1))], 9);
        assert_eq!(bigger.get("a.w").unwrap(), w);
    }

    #[test]
    fn checkpoint_roundtrip_and_corruption() {
        let s = store();
        let bytes = s.to_bytes();
        assert_eq!(ParamStore::from_bytes(&bytes).unwrap(), s);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(ParamStore::from_bytes(&bad), Err(Error::Protocol { field: "magic", .. })));
        assert!(matches!(
            ParamStore::from_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::Protocol { field: "length", .. })
        ));
    }

    #[test]
    fn spec_check_reports_shape() {
        let s = store();
        let err = s.check_specs(&[ParamSpec::new("b.w", &[5, 2], Init::Zero)]).unwrap_err();
        assert!(err.to_string().contains("b.w"));
        assert!(s.check_specs(&[ParamSpec::new("zzz", &[1], Init::Zero)]).is_err());
    }
}
