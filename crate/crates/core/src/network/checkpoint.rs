//! JSON checkpoints.
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "shape": {"input_dim": 2, "output_dim": 2, "hidden_layers": 5, "hidden_width": 25},
//!   "params": [...],
//!   "input_map": {"scale": [...], "shift": [...]},
//!   "step": 15200,
//!   "total_loss": 3.1e-6
//! }
//! ```
//!
//! `params` is the flat parameter vector in layer order (weights row-major,
//! then bias). Floats are written in shortest round-trip form, so a
//! checkpoint reloads bit-exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{InputMap, Network, NetworkShape, ParameterVector};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub shape: NetworkShape,
    pub params: Vec<f64>,
    pub input_map: InputMap,
    /// Training step the parameters were taken at.
    #[serde(default)]
    pub step: u64,
    #[serde(default)]
    pub total_loss: Option<f64>,
}

impl Checkpoint {
    pub fn from_network(net: &Network, step: u64, total_loss: Option<f64>) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            shape: net.shape(),
            params: net.params.values().to_vec(),
            input_map: net.input_map.clone(),
            step,
            total_loss,
        }
    }

    pub fn to_network(&self) -> Result<Network> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        let params = ParameterVector::new(self.shape, self.params.clone())?;
        Network::with_input_map(params, self.input_map.clone())
    }
}

pub fn write_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let text = serde_json::to_string_pretty(checkpoint)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::init_xavier;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("best.json");
        let net = Network::with_input_map(
            init_xavier(NetworkShape::surface(2, 5), 13),
            InputMap::normalizing(&[(0.0, 3.0), (0.0, 6.0), (0.0, 0.7)]),
        )
        .unwrap();
        write_checkpoint(&path, &Checkpoint::from_network(&net, 42, Some(0.125))).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(back.step, 42);
        assert_eq!(back.to_network().unwrap(), net);
    }

    #[test]
    fn rejects_unknown_version_and_bad_length() {
        let net = Network::new(init_xavier(NetworkShape::curve(1, 2), 1));
        let mut ck = Checkpoint::from_network(&net, 0, None);
        ck.format_version = 2;
        assert!(matches!(ck.to_network(), Err(Error::Checkpoint(_))));
        ck.format_version = 1;
        ck.params.pop();
        assert!(matches!(ck.to_network(), Err(Error::ShapeMismatch(_))));
    }
}
