use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use coarsemp::data::{self, DatasetPaths, GeometricConfig, PlantedPartitionConfig};
use coarsemp::{toy, Graph};
use serde::Serialize;

/// A resolved generator configuration.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum Generator {
    Geometric(GeometricConfig),
    Planted(PlantedPartitionConfig),
    SixNode,
}

fn parse_options(rest: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for item in rest.split(',').filter(|s| !s.is_empty()) {
        let (k, v) = item
            .split_once('=')
            .with_context(|| format!("generator option '{item}' is not key=value"))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn take<T: std::str::FromStr>(opts: &mut BTreeMap<String, String>, key: &str, default: T) -> Result<T> {
    match opts.remove(key) {
        Some(v) => v.parse().map_err(|_| anyhow::anyhow!("bad value '{v}' for generator option '{key}'")),
        None => Ok(default),
    }
}

impl Generator {
    pub fn parse(spec: &str) -> Result<Self> {
        let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
        let mut opts = parse_options(rest)?;
        let generator = match name {
            "geometric" => {
                let d = GeometricConfig::default();
                Generator::Geometric(GeometricConfig {
                    n: take(&mut opts, "n", d.n)?,
                    threshold: take(&mut opts, "threshold", d.threshold)?,
                    seed: take(&mut opts, "seed", d.seed)?,
                })
            }
            "planted" => {
                let d = PlantedPartitionConfig::default();
                Generator::Planted(PlantedPartitionConfig {
                    n: take(&mut opts, "n", d.n)?,
                    classes: take(&mut opts, "classes", d.classes)?,
                    p_in: take(&mut opts, "p_in", d.p_in)?,
                    p_out: take(&mut opts, "p_out", d.p_out)?,
                    feature_dim: take(&mut opts, "feature_dim", d.feature_dim)?,
                    noise_sigma: take(&mut opts, "noise", d.noise_sigma)?,
                    seed: take(&mut opts, "seed", d.seed)?,
                })
            }
            "six-node" => Generator::SixNode,
            other => bail!("unknown generator '{other}' (expected geometric, planted or six-node)"),
        };
        if let Some(key) = opts.keys().next() {
            bail!("unknown option '{key}' for generator '{name}'");
        }
        Ok(generator)
    }

    pub fn build(&self) -> Result<Graph> {
        Ok(match self {
            Generator::Geometric(cfg) => data::random_geometric_graph(cfg)?,
            Generator::Planted(cfg) => data::planted_partition_graph(cfg)?,
            Generator::SixNode => toy::six_node_graph(),
        })
    }
}

/// Loads or generates the graph and optionally restricts it to its
/// principal connected component.
pub fn load(graph: Option<&Path>, gen: Option<&str>, pcc: bool) -> Result<(Graph, Option<Generator>)> {
    let (g, generator) = match (graph, gen) {
        (Some(dir), None) => {
            let g = data::load_dataset(&DatasetPaths::in_dir(dir))
                .with_context(|| format!("loading dataset from {}", dir.display()))?;
            (g, None)
        }
        (None, Some(spec)) => {
            let generator = Generator::parse(spec)?;
            (generator.build()?, Some(generator))
        }
        _ => bail!("give exactly one of --graph and --gen"),
    };
    let g = if pcc { data::principal_connected_component(&g).0 } else { g };
    Ok((g, generator))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_specs() {
        match Generator::parse("geometric:n=50,threshold=0.2,seed=3").unwrap() {
            Generator::Geometric(c) => assert_eq!((c.n, c.threshold, c.seed), (50, 0.2, 3)),
            other => panic!("{other:?}"),
        }
        assert!(matches!(Generator::parse("planted").unwrap(), Generator::Planted(_)));
        assert!(Generator::parse("geometric:radius=1").is_err());
        assert!(Generator::parse("erdos").is_err());
    }
}
