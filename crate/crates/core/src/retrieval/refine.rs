use log::{info, warn};
use ndarray::Axis;

use super::csls::CslsParams;
use super::induce::build_dictionary;
use super::procrustes::procrustes;
use crate::adversarial::{Direction, ModelState, Side};
use crate::embedding::EmbeddingMatrix;
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct RefineOutcome {
    pub state: ModelState,
    /// Size of the source-to-target dictionary induced in each iteration.
    pub dictionary_sizes: Vec<usize>,
    pub completed_iterations: usize,
    /// Set when an iteration induced an empty dictionary.
    pub aborted: bool,
}

/// Iterative Procrustes refinement of both mappers.
///
/// Each iteration induces a mutual-nearest-neighbor dictionary under the
/// current mapper and replaces the mapper with the orthogonal Procrustes
/// solution on the dictionary's code pairs. `G` uses a source-to-target
/// dictionary, `F` a target-to-source one. Encoders stay fixed.
pub fn refine(
    mut state: ModelState,
    src: &EmbeddingMatrix,
    tgt: &EmbeddingMatrix,
    iterations: usize,
    params: CslsParams,
    top_n: usize,
) -> Result<RefineOutcome> {
    let mut sizes = Vec::with_capacity(iterations);
    if iterations == 0 {
        return Ok(RefineOutcome {
            state,
            dictionary_sizes: sizes,
            completed_iterations: 0,
            aborted: false,
        });
    }
    let codes_src = state.encode(Side::Source, src.vectors())?;
    let codes_tgt = state.encode(Side::Target, tgt.vectors())?;

    for it in 1..=iterations {
        let mut next = state.clone();
        let mut sizes_this = [0usize; 2];
        for (slot, dir) in Direction::BOTH.into_iter().enumerate() {
            let (from, to) = match dir {
                Direction::SourceToTarget => (&codes_src, &codes_tgt),
                Direction::TargetToSource => (&codes_tgt, &codes_src),
            };
            let mapped = state.mapper(dir).forward(from.view())?;
            let n = top_n.min(mapped.nrows());
            let dict = build_dictionary(mapped.view(), to.view(), params, n)?;
            if dict.is_empty() {
                warn!("refinement iteration {it}: empty dictionary, keeping the previous mappers");
                return Ok(RefineOutcome {
                    state,
                    completed_iterations: it - 1,
                    dictionary_sizes: sizes,
                    aborted: true,
                });
            }
            sizes_this[slot] = dict.len();
            let a = from.select(Axis(0), &dict.sources());
            let b = to.select(Axis(0), &dict.targets());
            *next.mapper_mut(dir) = procrustes(a.view(), b.view())?;
        }
        info!(
            "refinement iteration {it}: dictionary sizes {} (src->tgt) {} (tgt->src)",
            sizes_this[0], sizes_this[1]
        );
        sizes.push(sizes_this[0]);
        state = next;
    }
    Ok(RefineOutcome {
        state,
        dictionary_sizes: sizes,
        completed_iterations: iterations,
        aborted: false,
    })
}
