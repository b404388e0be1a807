//! Ground-truth polynomial force and moment models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::polyreg::{PolynomialModel, Term};
use crate::target::Target;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthTerm {
    pub term: String,
    pub coefficient: f64,
    #[serde(default)]
    pub fixed: bool,
    /// Goodness of fit reported when the term was added (reference only).
    #[serde(default)]
    pub r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthModelDoc {
    pub target: Target,
    pub terms: Vec<TruthTerm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthFile {
    pub model: Vec<TruthModelDoc>,
}

/// Six models indexed by [`Target`].
#[derive(Debug, Clone, PartialEq)]
pub struct TruthModelSet {
    pub models: Vec<PolynomialModel>,
    pub docs: Vec<TruthModelDoc>,
}

impl TruthModelSet {
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: TruthFile = toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        let mut models: Vec<Option<PolynomialModel>> = vec![None; 6];
        let mut docs: Vec<Option<TruthModelDoc>> = vec![None; 6];
        for doc in file.model {
            let i = doc.target.index();
            if models[i].is_some() {
                return Err(Error::Schema(format!("truth model for {} given twice", doc.target)));
            }
            let terms: Vec<Term> = doc.terms.iter().map(|t| Term::parse(&t.term)).collect::<Result<_>>()?;
            let coefficients = doc.terms.iter().map(|t| t.coefficient).collect();
            let n_fixed = doc.terms.iter().take_while(|t| t.fixed).count();
            let mut m = PolynomialModel::fixed(doc.target.name(), terms, coefficients)?;
            m.n_fixed = n_fixed;
            models[i] = Some(m);
            docs[i] = Some(doc);
        }
        let missing: Vec<&str> = Target::ALL
            .iter()
            .filter(|t| models[t.index()].is_none())
            .map(|t| t.name())
            .collect();
        if !missing.is_empty() {
            return Err(Error::Schema(format!("truth models missing for {missing:?}")));
        }
        Ok(TruthModelSet {
            models: models.into_iter().map(Option::unwrap).collect(),
            docs: docs.into_iter().map(Option::unwrap).collect(),
        })
    }

    pub fn model(&self, t: Target) -> &PolynomialModel {
        &self.models[t.index()]
    }

    pub fn scaled(&self, k: f64) -> Self {
        TruthModelSet {
            models: self.models.iter().map(|m| m.scaled(k)).collect(),
            docs: self.docs.clone(),
        }
    }
}

pub fn evaluate_truth(models: &TruthModelSet, x: &FeatureVector) -> [f64; 6] {
    let mut out = [0.0; 6];
    for t in Target::ALL {
        out[t.index()] = models.model(t).predict(x);
    }
    out
}
