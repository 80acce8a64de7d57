use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::signals::CausalOperator;

/// Block-diagonal stack: output block `i` depends on input block `i` only.
#[derive(Clone, Debug)]
pub struct Decentralized<O> {
    blocks: Vec<O>,
    in_off: Vec<usize>,
    out_off: Vec<usize>,
}

impl<O> Decentralized<O> {
    pub fn blocks(&self) -> &[O] {
        &self.blocks
    }

    pub fn input_partition(&self) -> Vec<usize> {
        self.in_off.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Stacks `blocks`, checking them against the declared input and output
/// partitions.
pub fn decentralized_compose<S: Scalar, O: CausalOperator<S>>(
    blocks: Vec<O>,
    input_partition: &[usize],
    output_partition: &[usize],
) -> Result<Decentralized<O>> {
    if blocks.len() != input_partition.len() || blocks.len() != output_partition.len() {
        return Err(Error::Dimension(format!(
            "{} blocks for partitions of length {} and {}",
            blocks.len(),
            input_partition.len(),
            output_partition.len()
        )));
    }
    for (i, b) in blocks.iter().enumerate() {
        if b.input_dim() != input_partition[i] || b.output_dim() != output_partition[i] {
            return Err(Error::Dimension(format!(
                "block {i} maps {} -> {}, partition says {} -> {}",
                b.input_dim(),
                b.output_dim(),
                input_partition[i],
                output_partition[i]
            )));
        }
    }
    Ok(Decentralized {
        blocks,
        in_off: crate::plants::partition_offsets(input_partition.iter().copied()),
        out_off: crate::plants::partition_offsets(output_partition.iter().copied()),
    })
}

impl<S: Scalar, O: CausalOperator<S>> CausalOperator<S> for Decentralized<O> {
    fn input_dim(&self) -> usize {
        *self.in_off.last().unwrap()
    }

    fn output_dim(&self) -> usize {
        *self.out_off.last().unwrap()
    }

    fn reset(&mut self) {
        self.blocks.iter_mut().for_each(CausalOperator::reset);
    }

    fn step(&mut self, input: &[S]) -> Vec<S> {
        let mut out = Vec::with_capacity(self.output_dim());
        for (i, b) in self.blocks.iter_mut().enumerate() {
            out.extend(b.step(&input[self.in_off[i]..self.in_off[i + 1]]));
        }
        out
    }
}

impl<O> Decentralized<O> {
    /// Steps block `i` alone on its own input slice.
    pub fn step_block<S: Scalar>(&mut self, i: usize, input: &[S]) -> Vec<S>
    where
        O: CausalOperator<S>,
    {
        self.blocks[i].step(input)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::l2ops::fir::Fir;
    use crate::linalg::Mat;
    use crate::signals::{estimate_gain, gaussian_probes, Scale};

    #[test]
    fn identity_blocks_stack_to_identity() {
        let mut d = decentralized_compose::<f64, _>(
            vec![Scale { dim: 2, factor: 1.0 }, Scale { dim: 3, factor: 1.0 }],
            &[2, 3],
            &[2, 3],
        )
        .unwrap();
        let s = gaussian_probes(5, 1, 10, 0).remove(0);
        assert_eq!(d.apply(&s), s);
    }

    #[test]
    fn blocks_do_not_see_each_other() {
        let taps = |seed: u64| {
            let p = gaussian_probes(2, 1, 3, seed).remove(0);
            (0..3).map(|t| Mat::from_f64(1, 2, p.at(t))).collect::<Vec<_>>()
        };
        let mut d = decentralized_compose::<f64, _>(
            vec![Fir::new(taps(1)).unwrap(), Fir::new(taps(2)).unwrap()],
            &[2, 2],
            &[1, 1],
        )
        .unwrap();
        let a = gaussian_probes(4, 1, 20, 5).remove(0);
        let mut b = a.clone();
        for t in 0..20 {
            b.at_mut(t)[2] += 1.0;
            b.at_mut(t)[3] -= 3.0;
        }
        let (ya, yb) = (d.apply(&a), d.apply(&b));
        for t in 0..20 {
            assert_eq!(ya.at(t)[0].to_bits(), yb.at(t)[0].to_bits());
        }
    }

    #[test]
    fn gain_below_largest_block_bound() {
        let mut d = decentralized_compose::<f64, _>(
            vec![Scale { dim: 1, factor: 0.5 }, Scale { dim: 2, factor: -2.0 }],
            &[1, 2],
            &[1, 2],
        )
        .unwrap();
        let g = estimate_gain(&mut d, &gaussian_probes(3, 64, 30, 2)).unwrap();
        assert!(g.value <= 2.0 * (1.0 + 1e-12));
    }

    #[test]
    fn partition_mismatch_rejected() {
        let r = decentralized_compose::<f64, _>(vec![Scale { dim: 2, factor: 1.0 }], &[3], &[2]);
        assert!(r.is_err());
        let r = decentralized_compose::<f64, _>(vec![Scale { dim: 2, factor: 1.0 }], &[2, 1], &[2]);
        assert!(r.is_err());
    }
}
