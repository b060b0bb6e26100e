use crate::addr::{Addr, PAGE_SIZE};
use crate::sim::{Domain, Op};

use super::{VictimError, VictimPage, VictimProgram};

pub const FANN_PAGE: u64 = 0x5555_5558_0000;
pub const FANN_WEIGHTS: usize = 376;
pub const FANN_DEFAULT_OFFSET: usize = 0x20;

#[derive(Clone, Debug, PartialEq)]
pub struct FannTruth {
    pub weights: Vec<f32>,
    pub offset: usize,
}

/// Classification loop over a fixed network: every step reads the whole
/// weight array, which always starts at the same page offset.
pub fn victim_fann(weights: &[f32], offset: usize, domain: Domain) -> Result<(VictimProgram, FannTruth), VictimError> {
    if weights.len() != FANN_WEIGHTS {
        return Err(VictimError::WeightCount {
            expected: FANN_WEIGHTS,
            got: weights.len(),
        });
    }
    let end = offset + 4 * weights.len();
    if end > PAGE_SIZE {
        return Err(VictimError::DoesNotFit { offset });
    }
    let mut contents = vec![0u8; PAGE_SIZE];
    for (i, w) in weights.iter().enumerate() {
        contents[offset + 4 * i..offset + 4 * i + 4].copy_from_slice(&w.to_le_bytes());
    }
    let mut ops: Vec<Op> = (offset & !7..end)
        .step_by(8)
        .map(|o| Op::load(Addr(FANN_PAGE + o as u64)))
        .collect();
    ops.push(Op::Yield);
    let program = VictimProgram {
        id: "fann".into(),
        domain,
        pages: vec![VictimPage {
            base: FANN_PAGE,
            contents,
        }],
        setup: Vec::new(),
        steps: vec![ops],
    };
    Ok((
        program,
        FannTruth {
            weights: weights.to_vec(),
            offset,
        },
    ))
}
