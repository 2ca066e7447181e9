//! A guide of any method, and its versioned text checkpoint.
//!
//! Layout: a magic line, `key value` header lines, then for each parameter
//! a `tensor <name> <rows> <cols>` line followed by its values on one line,
//! and a closing `end`. Values use the shortest round-trip representation,
//! so a reloaded guide samples bitwise identically.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::advi::AdviGuide;
use crate::autodiff::{Graph, Var};
use crate::diffusion::{DiffusionConfig, DiffusionGuide, SolverConfig};
use crate::error::{Error, Result};
use crate::guide::{EvidenceKind, Guide, Method};
use crate::iaf::{IafGuide, MADE_HIDDEN};
use crate::params::{BoundParams, ParamStore};
use crate::random::RngStream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const MAGIC: &str = "dmvi-guide-checkpoint v1";

#[derive(Debug, Clone, PartialEq)]
pub enum AnyGuide<S> {
    Advi(AdviGuide<S>),
    Dmvi(DiffusionGuide<S>),
    Nfvi(IafGuide<S>),
}

impl<S: Scalar> AnyGuide<S> {
    /// Freshly initialized guide; `diffusion` is used only for DMVI.
    pub fn new(method: Method, dim: usize, diffusion: &DiffusionConfig, rng: &mut RngStream) -> Result<Self> {
        Ok(match method {
            Method::Advi => AnyGuide::Advi(AdviGuide::new(dim)),
            Method::Dmvi => AnyGuide::Dmvi(DiffusionGuide::new(dim, *diffusion, rng)?),
            Method::Nfvi => AnyGuide::Nfvi(IafGuide::new(dim)),
        })
    }

    fn inner(&self) -> &dyn Guide<S> {
        match self {
            AnyGuide::Advi(g) => g,
            AnyGuide::Dmvi(g) => g,
            AnyGuide::Nfvi(g) => g,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Guide<S> {
        match self {
            AnyGuide::Advi(g) => g,
            AnyGuide::Dmvi(g) => g,
            AnyGuide::Nfvi(g) => g,
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{MAGIC}")?;
        writeln!(w, "method {}", self.method())?;
        writeln!(w, "dim {}", self.dim())?;
        match self {
            AnyGuide::Advi(_) => {}
            AnyGuide::Dmvi(g) => {
                let c = g.config();
                writeln!(w, "n_diffusion {}", c.n_diffusion)?;
                writeln!(w, "beta_min {}", c.beta_min)?;
                writeln!(w, "beta_max {}", c.beta_max)?;
                writeln!(w, "solver_steps {}", c.solver.steps)?;
                writeln!(w, "solver_order {}", c.solver.order)?;
                writeln!(w, "hidden_dim {}", c.hidden_dim)?;
                writeln!(w, "dropout_rate {}", c.dropout_rate)?;
                writeln!(w, "layer_norm {}", c.layer_norm)?;
            }
            AnyGuide::Nfvi(g) => writeln!(w, "hidden_dim {}", g.hidden())?,
        }
        writeln!(w, "step {}", self.params().step())?;
        for (name, t) in self.params().iter() {
            writeln!(w, "tensor {name} {} {}", t.rows(), t.cols())?;
            let values: Vec<String> = t.data().iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", values.join(" "))?;
        }
        writeln!(w, "end")?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let mut next = move || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Parse("truncated checkpoint".into()))?
                .map_err(Error::from)
        };
        let magic = next()?;
        if magic.trim() != MAGIC {
            return Err(Error::Parse(format!("unsupported checkpoint header `{magic}`")));
        }
        let mut header = BTreeMap::new();
        let mut params = ParamStore::new();
        loop {
            let line = next()?;
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("end") => break,
                Some("tensor") => {
                    let name = parts.next().ok_or_else(|| Error::Parse("tensor without name".into()))?;
                    let rows = parse_field::<usize>(parts.next(), "rows")?;
                    let cols = parse_field::<usize>(parts.next(), "cols")?;
                    let values = next()?
                        .split_whitespace()
                        .map(|v| parse_field::<S>(Some(v), name))
                        .collect::<Result<Vec<S>>>()?;
                    params.insert(name, Tensor::new(rows, cols, values)?);
                }
                Some(key) => {
                    let value = parts.collect::<Vec<_>>().join(" ");
                    header.insert(key.to_string(), value);
                }
                None => return Err(Error::Parse("blank checkpoint line".into())),
            }
        }
        let get = |key: &str| -> Result<&str> {
            header
                .get(key)
                .map(String::as_str)
                .ok_or_else(|| Error::Parse(format!("checkpoint lacks `{key}`")))
        };
        let method: Method = get("method")?.parse()?;
        let dim: usize = parse_field(Some(get("dim")?), "dim")?;
        let step: u64 = parse_field(Some(get("step")?), "step")?;
        let mut guide = match method {
            Method::Advi => AnyGuide::Advi(AdviGuide::from_store(dim, ParamStore::new())),
            Method::Dmvi => {
                let config = DiffusionConfig {
                    n_diffusion: parse_field(Some(get("n_diffusion")?), "n_diffusion")?,
                    beta_min: parse_field(Some(get("beta_min")?), "beta_min")?,
                    beta_max: parse_field(Some(get("beta_max")?), "beta_max")?,
                    solver: SolverConfig::new(
                        parse_field(Some(get("solver_steps")?), "solver_steps")?,
                        parse_field(Some(get("solver_order")?), "solver_order")?,
                    )?,
                    hidden_dim: parse_field(Some(get("hidden_dim")?), "hidden_dim")?,
                    dropout_rate: parse_field(Some(get("dropout_rate")?), "dropout_rate")?,
                    layer_norm: parse_field(Some(get("layer_norm")?), "layer_norm")?,
                };
                AnyGuide::Dmvi(DiffusionGuide::uninitialized(dim, config)?)
            }
            Method::Nfvi => {
                let hidden = parse_field(Some(get("hidden_dim")?), "hidden_dim").unwrap_or(MADE_HIDDEN);
                AnyGuide::Nfvi(IafGuide::from_store(dim, hidden, ParamStore::new()))
            }
        };
        let expected = match method {
            Method::Advi => AnyGuide::Advi(AdviGuide::<S>::new(dim)).params().clone(),
            Method::Dmvi => {
                let AnyGuide::Dmvi(g) = &guide else { unreachable!() };
                let mut store = ParamStore::<S>::new();
                g.network().init_params(&mut store, &mut crate::random::stream(0));
                store
            }
            Method::Nfvi => {
                let AnyGuide::Nfvi(g) = &guide else { unreachable!() };
                IafGuide::<S>::with_hidden(dim, g.hidden()).params().clone()
            }
        };
        for (name, t) in expected.iter() {
            let got = params
                .get(name)
                .ok_or_else(|| Error::Parse(format!("checkpoint lacks parameter `{name}`")))?;
            if got.shape() != t.shape() {
                return Err(Error::Parse(format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    got.shape(),
                    t.shape()
                )));
            }
        }
        if params.len() != expected.len() {
            return Err(Error::Parse("checkpoint has unexpected parameters".into()));
        }
        params.set_step(step);
        *guide.params_mut() = params;
        Ok(guide)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

fn parse_field<T: std::str::FromStr>(v: Option<&str>, what: &str) -> Result<T> {
    let v = v.ok_or_else(|| Error::Parse(format!("missing {what}")))?;
    v.parse()
        .map_err(|_| Error::Parse(format!("bad value `{v}` for {what}")))
}

impl<S: Scalar> Guide<S> for AnyGuide<S> {
    fn method(&self) -> Method {
        self.inner().method()
    }

    fn dim(&self) -> usize {
        self.inner().dim()
    }

    fn params(&self) -> &ParamStore<S> {
        self.inner().params()
    }

    fn params_mut(&mut self) -> &mut ParamStore<S> {
        self.inner_mut().params_mut()
    }

    fn evidence_kind(&self) -> EvidenceKind {
        self.inner().evidence_kind()
    }

    fn sample<'g>(&self, p: &BoundParams<'g, S>, g: &'g Graph<S>, rng: &mut RngStream, n: usize) -> Result<Var<'g, S>> {
        self.inner().sample(p, g, rng, n)
    }

    fn evidence<'g>(&self, p: &BoundParams<'g, S>, xi: Var<'g, S>, rng: &mut RngStream) -> Result<Var<'g, S>> {
        self.inner().evidence(p, xi, rng)
    }

    fn sample_and_evidence<'g>(
        &self,
        p: &BoundParams<'g, S>,
        g: &'g Graph<S>,
        rng: &mut RngStream,
        n: usize,
    ) -> Result<(Var<'g, S>, Var<'g, S>)> {
        self.inner().sample_and_evidence(p, g, rng, n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::stream;

    #[test]
    fn every_method_round_trips() {
        let config = DiffusionConfig::new(50, 10, 3).unwrap();
        for method in Method::ALL {
            let mut guide = AnyGuide::<f64>::new(method, 3, &config, &mut stream(1)).unwrap();
            // perturb so the dump is not all zeros
            for name in guide.params().names().map(String::from).collect::<Vec<_>>() {
                let t = guide.params_mut().get_mut(&name).unwrap();
                t.data_mut().iter_mut().enumerate().for_each(|(i, v)| *v += 0.001 * i as f64 / 7.0);
            }
            let mut buf = Vec::new();
            guide.write_to(&mut buf).unwrap();
            let back = AnyGuide::<f64>::read_from(buf.as_slice()).unwrap();
            assert_eq!(back.params(), guide.params(), "{method}");
            let a = guide.sample_values(&mut stream(5), 4).unwrap();
            let b = back.sample_values(&mut stream(5), 4).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn malformed_checkpoints_are_rejected() {
        assert!(AnyGuide::<f64>::read_from(&b"garbage\n"[..]).is_err());
        let text = format!("{MAGIC}\nmethod ADVI\ndim 2\nstep 0\nend\n");
        assert!(AnyGuide::<f64>::read_from(text.as_bytes()).is_err());
    }
}
