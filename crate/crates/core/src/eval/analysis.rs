use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{prompt_piece, EvalError, TaskResult};
use crate::chess::{classify_prediction, path_length, ErrorCategory, PieceType, PseudoLegalSubcategory};
use crate::corpus::{ProbeInstance, Prompt};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCount {
    pub errors: usize,
    pub total: usize,
}

/// Classification of every top-1 prediction of an End task.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorBreakdown {
    pub n: usize,
    pub legal: usize,
    /// Top-1 predictions that were not square tokens (only possible when
    /// predictions are not restricted to squares).
    pub non_square: usize,
    pub unreachable: usize,
    pub syntax: usize,
    pub path_obstruction: usize,
    pub pseudo_legal: usize,
    /// Keyed by check state and mover; totals exclude instances whose
    /// prediction fell into another error category.
    pub pseudo_subcats: BTreeMap<String, CellCount>,
    pub pseudo_total: CellCount,
    /// Path-obstruction errors per prompted piece type, over all prompts of that type.
    pub path_obstruction_by_piece: BTreeMap<String, CellCount>,
    /// King-move distance of each legal prediction.
    pub path_lengths_legal: Vec<u8>,
    /// King-move distance of each path-obstructed prediction.
    pub path_lengths_obstructed: Vec<u8>,
    /// Instances where the classifier and the LgM flag disagree; expected zero.
    pub oracle_disagreements: usize,
}

impl ErrorBreakdown {
    pub fn illegal(&self) -> usize {
        self.unreachable + self.syntax + self.path_obstruction + self.pseudo_legal
    }

    pub fn count(&self, cat: ErrorCategory) -> usize {
        match cat {
            ErrorCategory::Legal => self.legal,
            ErrorCategory::Unreachable => self.unreachable,
            ErrorCategory::Syntax => self.syntax,
            ErrorCategory::PathObstruction => self.path_obstruction,
            ErrorCategory::PseudoLegal => self.pseudo_legal,
        }
    }
}

/// Classifies each End-task prediction against the rules.
pub fn error_breakdown(instances: &[ProbeInstance], result: &TaskResult) -> Result<ErrorBreakdown, EvalError> {
    if !result.task.is_end() {
        return Err(EvalError::NotEndTask(result.task));
    }
    let mut b = ErrorBreakdown {
        n: instances.len(),
        ..ErrorBreakdown::default()
    };
    for sub in PseudoLegalSubcategory::ALL {
        b.pseudo_subcats.insert(sub.label().to_string(), CellCount::default());
    }
    for kind in PieceType::ALL.iter().filter(|&&k| k != PieceType::Pawn) {
        b.path_obstruction_by_piece.insert(kind.name().to_string(), CellCount::default());
    }
    for (inst, res) in instances.iter().zip(&result.instances) {
        let Prompt::Square(from) = inst.prompt else {
            continue;
        };
        let pos = inst.position();
        let kind = prompt_piece(inst);
        if let Some(k) = kind {
            if let Some(c) = b.path_obstruction_by_piece.get_mut(k.name()) {
                c.total += 1;
            }
        }
        let Some(to) = res.predicted else {
            b.non_square += 1;
            if res.lgm {
                b.oracle_disagreements += 1;
            }
            continue;
        };
        let cat = classify_prediction(&pos, from, to);
        if (cat == ErrorCategory::Legal) != res.lgm {
            b.oracle_disagreements += 1;
        }
        let king = kind == Some(PieceType::King);
        let cell = PseudoLegalSubcategory::from_flags(pos.is_check(pos.side_to_move()), king).label();
        match cat {
            ErrorCategory::Legal => {
                b.legal += 1;
                b.path_lengths_legal.push(path_length(from, to));
            }
            ErrorCategory::Unreachable => b.unreachable += 1,
            ErrorCategory::Syntax => b.syntax += 1,
            ErrorCategory::PathObstruction => {
                b.path_obstruction += 1;
                b.path_lengths_obstructed.push(path_length(from, to));
                if let Some(k) = kind {
                    if let Some(c) = b.path_obstruction_by_piece.get_mut(k.name()) {
                        c.errors += 1;
                    }
                }
            }
            ErrorCategory::PseudoLegal => b.pseudo_legal += 1,
        }
        if matches!(cat, ErrorCategory::Legal | ErrorCategory::PseudoLegal) {
            let c = b.pseudo_subcats.get_mut(cell).expect("all cells seeded");
            c.total += 1;
            b.pseudo_total.total += 1;
            if cat == ErrorCategory::PseudoLegal {
                c.errors += 1;
                b.pseudo_total.errors += 1;
            }
        }
    }
    Ok(b)
}
