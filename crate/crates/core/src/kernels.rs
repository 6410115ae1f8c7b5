//! Adjacency kernels: gather-form `B1 = I R_r`, `B2 = I R_s`, the
//! outer-product aggregation `Ē = E R_r^T`, column concatenation, and the
//! dense product they are checked against.
//!
//! Every kernel takes an [`Instrument`]; pass `&mut ()` for none. The
//! instrumented and plain paths execute the same arithmetic.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{AdjacencyStructure, GraphConfig};
use crate::matrix::ColMatrix;
use crate::scalar::Scalar;

/// Hooks called by the kernels as they work.
pub trait Instrument {
    fn multiplies(&mut self, _n: u64) {}
    fn additions(&mut self, _n: u64) {}
    fn iterations(&mut self, _n: u64) {}
    /// A read of the flat column-major offset `offset` of the kernel's main operand.
    fn read(&mut self, _offset: usize) {}
}

impl Instrument for () {}

/// Operation and access counts for one kernel call.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct OpCounter {
    pub multiplications: u64,
    pub additions: u64,
    pub iterations: u64,
    pub reads: u64,
    /// Reads whose offset is lower than the previous read's.
    pub nonsequential_reads: u64,
    last_read: Option<usize>,
}

impl OpCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

impl Instrument for OpCounter {
    fn multiplies(&mut self, n: u64) {
        self.multiplications += n;
    }
    fn additions(&mut self, n: u64) {
        self.additions += n;
    }
    fn iterations(&mut self, n: u64) {
        self.iterations += n;
    }
    fn read(&mut self, offset: usize) {
        self.reads += 1;
        if self.last_read.is_some_and(|last| offset < last) {
            self.nonsequential_reads += 1;
        }
        self.last_read = Some(offset);
    }
}

/// Plain inner-product matrix product. Reference path for the structured kernels.
pub fn dense_mmm<T: Scalar>(a: &ColMatrix<T>, b: &ColMatrix<T>, probe: &mut impl Instrument) -> Result<ColMatrix<T>> {
    if a.cols() != b.rows() {
        return Err(Error::dim("dense_mmm", format!("{}x{} times {}x{}", a.rows(), a.cols(), b.rows(), b.cols())));
    }
    if a.cols() == 0 || a.rows() == 0 || b.cols() == 0 {
        return Err(Error::dim("dense_mmm", "empty operand"));
    }
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = Vec::with_capacity(m * n);
    for c in 0..n {
        let bcol = b.column(c);
        for r in 0..m {
            let mut acc = a.get(r, 0).mul(bcol[0]);
            for (i, &bv) in bcol.iter().enumerate().skip(1) {
                acc = acc.add(a.get(r, i).mul(bv));
            }
            out.push(acc);
        }
    }
    probe.multiplies((m * k * n) as u64);
    probe.additions((m * (k - 1) * n) as u64);
    probe.iterations((m * k * n) as u64);
    ColMatrix::from_col_major(m, n, out)
}

/// `B1 = I R_r` and `B2 = I R_s` as pure column copies.
///
/// Column `e` of `B1` is node `receiver(e)`, of `B2` node `sender(e)`. No
/// multiplications or additions are performed.
pub fn gather_b1_b2<T: Scalar>(
    i_mat: &ColMatrix<T>,
    adj: &AdjacencyStructure,
    probe: &mut impl Instrument,
) -> Result<(ColMatrix<T>, ColMatrix<T>)> {
    let graph = adj.graph();
    if i_mat.cols() != graph.n_o() {
        return Err(Error::dim("gather_b1_b2", format!("I has {} columns, graph has {} nodes", i_mat.cols(), graph.n_o())));
    }
    let p = i_mat.rows();
    let n_e = graph.n_e();
    let mut b1 = Vec::with_capacity(p * n_e);
    let mut b2 = Vec::with_capacity(p * n_e);
    // Receiver blocks are contiguous, so the receiver column is fixed per block
    // and only the sender index moves.
    for recv in 0..graph.n_o() {
        let rcol = i_mat.column(recv);
        for j in 0..adj.block_len() {
            let send = if j < recv { j } else { j + 1 };
            b1.extend_from_slice(rcol);
            b2.extend_from_slice(i_mat.column(send));
        }
    }
    probe.iterations(2 * (p * n_e) as u64);
    Ok((ColMatrix::from_col_major(p, n_e, b1)?, ColMatrix::from_col_major(p, n_e, b2)?))
}

/// `Ē = E R_r^T` by outer products over the one-hot rows of `R_r^T`.
///
/// `E` is streamed once in column order; each receiver block of `n_o - 1`
/// consecutive columns is summed (edge order ascending) into one output
/// column before the next block starts.
pub fn aggregate_outer<T: Scalar>(
    e_mat: &ColMatrix<T>,
    adj: &AdjacencyStructure,
    probe: &mut impl Instrument,
) -> Result<ColMatrix<T>> {
    let graph = adj.graph();
    if e_mat.cols() != graph.n_e() {
        return Err(Error::dim("aggregate_outer", format!("E has {} columns, graph has {} edges", e_mat.cols(), graph.n_e())));
    }
    let d_e = e_mat.rows();
    if d_e == 0 {
        return Err(Error::dim("aggregate_outer", "E has no rows"));
    }
    let zero = e_mat.as_slice()[0].zero_like();
    let mut out = Vec::with_capacity(d_e * graph.n_o());
    let mut column = vec![zero; d_e];
    for recv in 0..graph.n_o() {
        column.fill(zero);
        for j in 0..adj.block_len() {
            let e = adj.edge(recv, j);
            for (f, slot) in column.iter_mut().enumerate() {
                probe.read(e * d_e + f);
                *slot = slot.add(e_mat.get(f, e));
            }
        }
        out.extend_from_slice(&column);
    }
    let work = (d_e * graph.n_e()) as u64;
    probe.additions(work);
    probe.iterations(work);
    ColMatrix::from_col_major(d_e, graph.n_o(), out)
}

/// Stacks `top` over `bottom` column by column.
pub fn concat_cols<T: Copy>(top: &ColMatrix<T>, bottom: &ColMatrix<T>) -> Result<ColMatrix<T>> {
    if top.cols() != bottom.cols() {
        return Err(Error::dim("concat_cols", format!("{} columns vs {}", top.cols(), bottom.cols())));
    }
    let rows = top.rows() + bottom.rows();
    let mut data = Vec::with_capacity(rows * top.cols());
    for c in 0..top.cols() {
        data.extend_from_slice(top.column(c));
        data.extend_from_slice(bottom.column(c));
    }
    ColMatrix::from_col_major(rows, top.cols(), data)
}

/// Dense-versus-structured counts for one kernel family.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelReduction {
    pub kernel: &'static str,
    pub dense_mults: u64,
    pub dense_adds: u64,
    pub dense_iterations: u64,
    pub custom_mults: u64,
    pub custom_adds: u64,
    pub custom_iterations: u64,
}

impl KernelReduction {
    pub fn iteration_reduction_pct(&self) -> f64 {
        100.0 * (1.0 - self.custom_iterations as f64 / self.dense_iterations as f64)
    }

    pub fn addition_ratio_pct(&self) -> f64 {
        100.0 * self.custom_adds as f64 / self.dense_adds as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionSummary {
    pub mmm12: KernelReduction,
    pub mmm3: KernelReduction,
}

pub const REDUCTION_CSV_HEADER: &str = "kernel,dense_mults,dense_adds,custom_mults,custom_adds,iter_reduction_pct";

impl ReductionSummary {
    pub fn rows(&self) -> [&KernelReduction; 2] {
        [&self.mmm12, &self.mmm3]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(REDUCTION_CSV_HEADER);
        s.push('\n');
        for k in self.rows() {
            s.push_str(&format!(
                "{},{},{},{},{},{:.1}\n",
                k.kernel,
                k.dense_mults,
                k.dense_adds,
                k.custom_mults,
                k.custom_adds,
                k.iteration_reduction_pct()
            ));
        }
        s
    }
}

/// Closed-form operation counts of the dense and structured MMM kernels.
///
/// The dense MMM3 addition baseline counts every one of the `n_e` terms per
/// output element (`d_e * n_o * n_e`).
pub fn reduction_report(graph: GraphConfig, d_e: usize) -> ReductionSummary {
    let (p, n_o, n_e) = (graph.p() as u64, graph.n_o() as u64, graph.n_e() as u64);
    let d_e = d_e as u64;
    let mmm12 = KernelReduction {
        kernel: "MMM1/2",
        dense_mults: 2 * p * n_o * n_e,
        dense_adds: 2 * p * (n_o - 1) * n_e,
        dense_iterations: 2 * p * n_o * n_e,
        custom_mults: 0,
        custom_adds: 0,
        custom_iterations: 2 * p * n_e,
    };
    let mmm3 = KernelReduction {
        kernel: "MMM3",
        dense_mults: d_e * n_e * n_o,
        dense_adds: d_e * n_o * n_e,
        dense_iterations: d_e * n_e * n_o,
        custom_mults: 0,
        custom_adds: d_e * n_e,
        custom_iterations: d_e * n_e,
    };
    ReductionSummary { mmm12, mmm3 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::make_adjacency;

    fn adj(n_o: usize, p: usize) -> AdjacencyStructure {
        make_adjacency(GraphConfig::new(n_o, p).unwrap())
    }

    #[test]
    fn dense_identity_and_hand_product() {
        let a = ColMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let id = ColMatrix::identity_like(2, 0.0);
        assert_eq!(dense_mmm(&a, &id, &mut ()).unwrap(), a);

        let row = ColMatrix::from_rows(&[vec![1, 2]]).unwrap();
        let col = ColMatrix::from_rows(&[vec![3], vec![4]]).unwrap();
        let mut c = OpCounter::new();
        assert_eq!(dense_mmm(&row, &col, &mut c).unwrap().as_slice(), &[11]);
        assert_eq!((c.multiplications, c.additions), (2, 1));
    }

    #[test]
    fn dense_rejects_mismatch() {
        let a = ColMatrix::filled(2, 3, 1.0);
        assert!(matches!(dense_mmm(&a, &a, &mut ()), Err(Error::Dimension { .. })));
    }

    #[test]
    fn gather_three_nodes() {
        let i = ColMatrix::from_rows(&[vec![1, 2, 3], vec![4, 5, 6]]).unwrap();
        let mut c = OpCounter::new();
        let (b1, b2) = gather_b1_b2(&i, &adj(3, 2), &mut c).unwrap();
        let n = |k: usize| i.column(k).to_vec();
        let b1_cols: Vec<_> = b1.columns().map(<[_]>::to_vec).collect();
        let b2_cols: Vec<_> = b2.columns().map(<[_]>::to_vec).collect();
        assert_eq!(b1_cols, vec![n(0), n(0), n(1), n(1), n(2), n(2)]);
        assert_eq!(b2_cols, vec![n(1), n(2), n(0), n(2), n(0), n(1)]);
        assert_eq!((c.multiplications, c.additions), (0, 0));
    }

    #[test]
    fn gather_two_nodes_swaps() {
        let i = ColMatrix::from_rows(&[vec![7.0, 9.0]]).unwrap();
        let (b1, b2) = gather_b1_b2(&i, &adj(2, 1), &mut ()).unwrap();
        assert_eq!(b1.as_slice(), &[7.0, 9.0]);
        assert_eq!(b2.as_slice(), &[9.0, 7.0]);
    }

    #[test]
    fn gather_rejects_wrong_width() {
        let i = ColMatrix::filled(2, 4, 0.0);
        assert!(gather_b1_b2(&i, &adj(3, 2), &mut ()).is_err());
    }

    #[test]
    fn aggregate_small_example() {
        let e = ColMatrix::from_rows(&[vec![1, 2, 3, 4, 5, 6]]).unwrap();
        let out = aggregate_outer(&e, &adj(3, 1), &mut ()).unwrap();
        assert_eq!(out.as_slice(), &[3, 7, 11]);
        let zeros = ColMatrix::filled(4, 6, 0.0);
        assert!(aggregate_outer(&zeros, &adj(3, 1), &mut ()).unwrap().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn aggregate_counts_at_thirty_nodes() {
        let e = ColMatrix::filled(8, 870, 1i64);
        let mut c = OpCounter::new();
        let out = aggregate_outer(&e, &adj(30, 16), &mut c).unwrap();
        assert_eq!(c.additions, 6960);
        assert_eq!(c.multiplications, 0);
        assert_eq!(c.reads, 6960);
        assert_eq!(c.nonsequential_reads, 0);
        assert!(out.as_slice().iter().all(|&v| v == 29));
    }

    #[test]
    fn aggregate_rejects_wrong_width() {
        let e = ColMatrix::filled(2, 5, 0.0);
        assert!(aggregate_outer(&e, &adj(3, 1), &mut ()).is_err());
    }

    #[test]
    fn concat_shapes() {
        let a = ColMatrix::from_rows(&[vec![1]]).unwrap();
        let b = ColMatrix::from_rows(&[vec![2]]).unwrap();
        assert_eq!(concat_cols(&a, &b).unwrap().to_rows(), vec![vec![1], vec![2]]);

        let b1 = ColMatrix::filled(16, 870, 0.0);
        assert_eq!(concat_cols(&b1, &b1).unwrap().rows(), 32);
        let i = ColMatrix::filled(16, 30, 0.0);
        let ebar = ColMatrix::filled(8, 30, 0.0);
        let c = concat_cols(&i, &ebar).unwrap();
        assert_eq!((c.rows(), c.cols()), (24, 30));
        assert!(concat_cols(&i, &b1).is_err());
    }

    #[test]
    fn reduction_figures() {
        let r = reduction_report(GraphConfig::new(30, 16).unwrap(), 8);
        assert_eq!(r.mmm3.custom_adds, 6960);
        assert_eq!(r.mmm3.dense_adds, 208_800);
        assert!((r.mmm3.addition_ratio_pct() - 100.0 / 30.0).abs() < 1e-12);
        assert_eq!((r.mmm12.custom_mults, r.mmm12.custom_adds), (0, 0));
        assert!((r.mmm12.iteration_reduction_pct() - 96.666_666_666_666_67).abs() < 1e-9);
        assert!((r.mmm3.iteration_reduction_pct() - 96.666_666_666_666_67).abs() < 1e-9);
        let csv = r.to_csv();
        assert!(csv.contains("MMM3,208800,208800,0,6960,96.7"));

        let small = reduction_report(GraphConfig::new(2, 1).unwrap(), 1);
        assert_eq!(small.mmm3.iteration_reduction_pct(), 50.0);
        assert_eq!(small.mmm12.iteration_reduction_pct(), 50.0);
    }
}
