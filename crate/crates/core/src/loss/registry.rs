use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    am_softmax_loss, softmax_loss, template_instance_loss, template_loss_only, CosineBatch, LossConfig, LossEvaluation,
};
use crate::affinity::PriorMarginTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Softmax,
    Am,
    Template,
    #[default]
    TemplateInstance,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [
        LossKind::Softmax,
        LossKind::Am,
        LossKind::Template,
        LossKind::TemplateInstance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Softmax => "softmax",
            LossKind::Am => "am",
            LossKind::Template => "template",
            LossKind::TemplateInstance => "template_instance",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownStrategy {
                kind: "loss",
                name: s.to_string(),
                known: LossKind::ALL.map(LossKind::name).join(", "),
            })
    }
}

/// Everything a loss may need besides the batch.
#[derive(Debug, Clone, Copy)]
pub struct LossContext<'a> {
    pub config: &'a LossConfig,
    /// `None` means no prior margins (an all-zero table).
    pub margins: Option<&'a PriorMarginTable>,
    /// Instance margin bound for this step.
    pub alpha: f64,
}

pub trait CosineLoss: Send + Sync {
    fn kind(&self) -> LossKind;

    fn evaluate(&self, batch: &CosineBatch, ctx: &LossContext<'_>) -> Result<LossEvaluation>;
}

struct Softmax;
struct AdditiveMargin;
struct Template;
struct TemplateInstance;

impl CosineLoss for Softmax {
    fn kind(&self) -> LossKind {
        LossKind::Softmax
    }

    fn evaluate(&self, batch: &CosineBatch, ctx: &LossContext<'_>) -> Result<LossEvaluation> {
        softmax_loss(batch, ctx.config)
    }
}

impl CosineLoss for AdditiveMargin {
    fn kind(&self) -> LossKind {
        LossKind::Am
    }

    fn evaluate(&self, batch: &CosineBatch, ctx: &LossContext<'_>) -> Result<LossEvaluation> {
        am_softmax_loss(batch, ctx.config)
    }
}

impl CosineLoss for Template {
    fn kind(&self) -> LossKind {
        LossKind::Template
    }

    fn evaluate(&self, batch: &CosineBatch, ctx: &LossContext<'_>) -> Result<LossEvaluation> {
        template_loss_only(batch, ctx.config, ctx.margins)
    }
}

impl CosineLoss for TemplateInstance {
    fn kind(&self) -> LossKind {
        LossKind::TemplateInstance
    }

    fn evaluate(&self, batch: &CosineBatch, ctx: &LossContext<'_>) -> Result<LossEvaluation> {
        template_instance_loss(batch, ctx.config, ctx.margins, ctx.alpha)
    }
}

/// Losses selectable by name at runtime.
pub struct LossRegistry {
    entries: Vec<Box<dyn CosineLoss>>,
}

impl fmt::Debug for LossRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.entries.iter().map(|e| e.kind())).finish()
    }
}

impl Default for LossRegistry {
    fn default() -> Self {
        LossRegistry::standard()
    }
}

impl LossRegistry {
    pub fn empty() -> Self {
        LossRegistry { entries: Vec::new() }
    }

    pub fn standard() -> Self {
        let mut reg = LossRegistry::empty();
        reg.register(Box::new(Softmax));
        reg.register(Box::new(AdditiveMargin));
        reg.register(Box::new(Template));
        reg.register(Box::new(TemplateInstance));
        reg
    }

    /// Adds a loss, replacing any registered under the same kind.
    pub fn register(&mut self, loss: Box<dyn CosineLoss>) {
        match self.entries.iter().position(|e| e.kind() == loss.kind()) {
            Some(i) => self.entries[i] = loss,
            None => self.entries.push(loss),
        }
    }

    pub fn get(&self, kind: LossKind) -> Option<&dyn CosineLoss> {
        self.entries.iter().find(|e| e.kind() == kind).map(|e| e.as_ref())
    }

    pub fn by_name(&self, name: &str) -> Result<&dyn CosineLoss> {
        let kind: LossKind = name.parse()?;
        self.get(kind).ok_or_else(|| Error::UnknownStrategy {
            kind: "loss",
            name: name.to_string(),
            known: self.names().join(", "),
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.kind().name()).collect()
    }
}
