use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::autoencoder::Autoencoder;
use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::tensor::{DiscriminatorNet, LinearMap};

/// Language side of the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Source,
    Target,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Source => Side::Target,
            Side::Target => Side::Source,
        }
    }
}

/// Mapping direction: `SourceToTarget` uses `G`, `TargetToSource` uses `F`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    SourceToTarget,
    TargetToSource,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::SourceToTarget, Direction::TargetToSource];

    /// The direction that maps codes out of `side`.
    pub fn leaving(side: Side) -> Direction {
        match side {
            Side::Source => Direction::SourceToTarget,
            Side::Target => Direction::TargetToSource,
        }
    }

    pub fn from_side(self) -> Side {
        match self {
            Direction::SourceToTarget => Side::Source,
            Direction::TargetToSource => Side::Target,
        }
    }

    pub fn to_side(self) -> Side {
        self.from_side().other()
    }

    pub fn reverse(self) -> Direction {
        match self {
            Direction::SourceToTarget => Direction::TargetToSource,
            Direction::TargetToSource => Direction::SourceToTarget,
        }
    }
}

/// All learnable parameters: two autoencoders, the mappers `G` (source to
/// target codes) and `F` (target to source codes), and one discriminator
/// per language.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub ae_src: Autoencoder,
    pub ae_tgt: Autoencoder,
    pub mapper_g: LinearMap,
    pub mapper_f: LinearMap,
    pub disc_src: DiscriminatorNet,
    pub disc_tgt: DiscriminatorNet,
}

impl ModelState {
    /// Random autoencoders and discriminators, identity mappers.
    pub fn init<R: Rng + ?Sized>(
        src_dim: usize,
        tgt_dim: usize,
        src_lang: &str,
        tgt_lang: &str,
        cfg: &TrainConfig,
        rng: &mut R,
    ) -> Self {
        let c = cfg.code_dim;
        let ae_src = Autoencoder::random(src_dim, c, src_lang, rng);
        let ae_tgt = Autoencoder::random(tgt_dim, c, tgt_lang, rng);
        let disc_src = DiscriminatorNet::new(c, cfg.disc_hidden, cfg.leaky_slope, cfg.disc_dropout, rng);
        let disc_tgt = DiscriminatorNet::new(c, cfg.disc_hidden, cfg.leaky_slope, cfg.disc_dropout, rng);
        ModelState {
            ae_src,
            ae_tgt,
            mapper_g: LinearMap::identity(c),
            mapper_f: LinearMap::identity(c),
            disc_src,
            disc_tgt,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.code_dim();
        let square = |m: &LinearMap| m.in_dim() == c && m.out_dim() == c;
        let ok = self.ae_tgt.code_dim() == c
            && square(&self.mapper_g)
            && square(&self.mapper_f)
            && self.disc_src.code_dim() == c
            && self.disc_tgt.code_dim() == c;
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "model blocks disagree on code dimension {c}"
            )));
        }
        Ok(())
    }

    pub fn code_dim(&self) -> usize {
        self.ae_src.code_dim()
    }

    pub fn autoencoder(&self, side: Side) -> &Autoencoder {
        match side {
            Side::Source => &self.ae_src,
            Side::Target => &self.ae_tgt,
        }
    }

    pub fn autoencoder_mut(&mut self, side: Side) -> &mut Autoencoder {
        match side {
            Side::Source => &mut self.ae_src,
            Side::Target => &mut self.ae_tgt,
        }
    }

    pub fn discriminator(&self, side: Side) -> &DiscriminatorNet {
        match side {
            Side::Source => &self.disc_src,
            Side::Target => &self.disc_tgt,
        }
    }

    pub fn discriminator_mut(&mut self, side: Side) -> &mut DiscriminatorNet {
        match side {
            Side::Source => &mut self.disc_src,
            Side::Target => &mut self.disc_tgt,
        }
    }

    /// `G` for source-to-target, `F` for target-to-source.
    pub fn mapper(&self, dir: Direction) -> &LinearMap {
        match dir {
            Direction::SourceToTarget => &self.mapper_g,
            Direction::TargetToSource => &self.mapper_f,
        }
    }

    pub fn mapper_mut(&mut self, dir: Direction) -> &mut LinearMap {
        match dir {
            Direction::SourceToTarget => &mut self.mapper_g,
            Direction::TargetToSource => &mut self.mapper_f,
        }
    }

    pub fn encode(&self, side: Side, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.autoencoder(side).encode(batch)
    }

    /// Encodes with the direction's source encoder and applies its mapper.
    pub fn encode_and_map(&self, dir: Direction, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        let codes = self.encode(dir.from_side(), batch)?;
        self.mapper(dir).forward(codes.view())
    }

    pub fn is_finite(&self) -> bool {
        self.ae_src.is_finite()
            && self.ae_tgt.is_finite()
            && self.mapper_g.weight().iter().all(|v| v.is_finite())
            && self.mapper_f.weight().iter().all(|v| v.is_finite())
            && self.disc_src.is_finite()
            && self.disc_tgt.is_finite()
    }
}

/// One orthogonalization step `W ← (1+β)W − β(WWᵀ)W`.
pub fn orthogonalize(map: &LinearMap, beta: f64) -> Result<LinearMap> {
    let mut out = map.clone();
    orthogonalize_in_place(&mut out, beta)?;
    Ok(out)
}

pub fn orthogonalize_in_place(map: &mut LinearMap, beta: f64) -> Result<()> {
    if map.in_dim() != map.out_dim() {
        return Err(Error::shape(
            "orthogonalize",
            "square matrix",
            format!("{}x{}", map.out_dim(), map.in_dim()),
        ));
    }
    let w = map.weight();
    let wwt_w = w.dot(&w.t()).dot(w);
    let updated = w * (1.0 + beta) - wwt_w * beta;
    *map.weight_mut() = updated;
    Ok(())
}
