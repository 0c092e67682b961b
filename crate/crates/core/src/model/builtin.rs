use super::parse::parse_model_with;
use super::{BiochemicalSystem, Constants, ModelError};

const OSCILLATORY: &str = include_str!("../../models/oscillatory.model");
const ENZYME: &str = include_str!("../../models/enzyme.model");
const ECOLI: &str = include_str!("../../models/ecoli.model");

/// Rate constants the E. coli model cannot be built without.
pub const ECOLI_CONSTANTS: [&str; 8] = ["k1", "k2", "k3", "k4", "k5", "k6", "k7", "k9"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinModel {
    Oscillatory,
    Enzyme,
    Ecoli,
}

impl BuiltinModel {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "oscillatory" => Some(Self::Oscillatory),
            "enzyme" => Some(Self::Enzyme),
            "ecoli" => Some(Self::Ecoli),
            _ => None,
        }
    }

    pub fn source(self) -> &'static str {
        match self {
            Self::Oscillatory => OSCILLATORY,
            Self::Enzyme => ENZYME,
            Self::Ecoli => ECOLI,
        }
    }
}

/// One of the bundled benchmark models. `constants` is only consulted for
/// `ecoli`, which needs every entry of [`ECOLI_CONSTANTS`]; `Hin` defaults to 1.
pub fn builtin(name: &str, constants: &Constants) -> Result<BiochemicalSystem, ModelError> {
    let model = BuiltinModel::from_name(name)
        .ok_or_else(|| ModelError::UnknownBuiltin(name.to_string()))?;
    if model != BuiltinModel::Ecoli {
        return parse_model_with(model.source(), &Constants::new());
    }
    let missing: Vec<String> = ECOLI_CONSTANTS
        .iter()
        .filter(|k| !constants.contains_key(**k))
        .map(|k| k.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(ModelError::MissingConstants {
            model: name.to_string(),
            missing,
        });
    }
    let mut all = constants.clone();
    all.entry("Hin".into()).or_insert(1.0);
    parse_model_with(model.source(), &all)
}
