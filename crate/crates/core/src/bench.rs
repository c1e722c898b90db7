//! Product counting and allocation tracking for complexity audits.

use std::alloc::{GlobalAlloc, Layout, System};
use std::cell::Cell;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::accessor::{Capabilities, MatrixAccessor};
use crate::error::{Error, Result};
use crate::io::{DriftedGaussianToeplitz, ToeplitzParams};
use crate::linalg::C64;
use crate::lowmem::{cur_build, CurRule};
use crate::qless::{qless_qr, qr_cur, QrRule};
use crate::rng::RngState;

/// Bytes per complex double, the unit of the memory budget.
pub const SCALAR_BYTES: usize = 16;

/// Wraps an accessor and counts calls by kind.
#[derive(Debug)]
pub struct CountingAccessor<A> {
    inner: A,
    applies: AtomicUsize,
    adjoints: AtomicUsize,
    rows: AtomicUsize,
    columns: AtomicUsize,
    entries: AtomicUsize,
    row_norm_passes: AtomicUsize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CallCounts {
    pub applies: usize,
    pub adjoints: usize,
    pub rows: usize,
    pub columns: usize,
    pub entries: usize,
    pub row_norm_passes: usize,
}

impl<A: MatrixAccessor> CountingAccessor<A> {
    pub fn new(inner: A) -> Self {
        Self {
            inner,
            applies: AtomicUsize::new(0),
            adjoints: AtomicUsize::new(0),
            rows: AtomicUsize::new(0),
            columns: AtomicUsize::new(0),
            entries: AtomicUsize::new(0),
            row_norm_passes: AtomicUsize::new(0),
        }
    }

    pub fn counts(&self) -> CallCounts {
        CallCounts {
            applies: self.applies.load(Ordering::SeqCst),
            adjoints: self.adjoints.load(Ordering::SeqCst),
            rows: self.rows.load(Ordering::SeqCst),
            columns: self.columns.load(Ordering::SeqCst),
            entries: self.entries.load(Ordering::SeqCst),
            row_norm_passes: self.row_norm_passes.load(Ordering::SeqCst),
        }
    }

    pub fn reset(&self) {
        for c in [
            &self.applies,
            &self.adjoints,
            &self.rows,
            &self.columns,
            &self.entries,
            &self.row_norm_passes,
        ] {
            c.store(0, Ordering::SeqCst);
        }
    }

    pub fn inner(&self) -> &A {
        &self.inner
    }
}

fn bump(c: &AtomicUsize) {
    c.fetch_add(1, Ordering::SeqCst);
}

impl<A: MatrixAccessor> MatrixAccessor for CountingAccessor<A> {
    fn shape(&self) -> (usize, usize) {
        self.inner.shape()
    }

    fn capabilities(&self) -> Capabilities {
        self.inner.capabilities()
    }

    fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        bump(&self.applies);
        self.inner.apply(x)
    }

    fn adjoint_apply(&self, y: &[C64]) -> Result<Vec<C64>> {
        bump(&self.adjoints);
        self.inner.adjoint_apply(y)
    }

    fn transpose_apply(&self, y: &[C64]) -> Result<Vec<C64>> {
        bump(&self.adjoints);
        self.inner.transpose_apply(y)
    }

    fn entry(&self, i: usize, j: usize) -> Result<C64> {
        bump(&self.entries);
        self.inner.entry(i, j)
    }

    fn row(&self, i: usize) -> Result<Vec<C64>> {
        bump(&self.rows);
        self.inner.row(i)
    }

    fn column(&self, j: usize) -> Result<Vec<C64>> {
        bump(&self.columns);
        self.inner.column(j)
    }

    fn row_norms(&self) -> Result<Vec<f64>> {
        bump(&self.row_norm_passes);
        self.inner.row_norms()
    }

    fn column_norms(&self) -> Result<Vec<f64>> {
        bump(&self.row_norm_passes);
        self.inner.column_norms()
    }
}

thread_local! {
    static TRACKING: Cell<bool> = const { Cell::new(false) };
    static LIVE: Cell<isize> = const { Cell::new(0) };
    static PEAK: Cell<isize> = const { Cell::new(0) };
}

/// Global allocator that, on threads inside [`track_peak`], records the
/// peak of live heap bytes.
///
/// Install with `#[global_allocator] static A: TrackingAllocator = TrackingAllocator;`.
pub struct TrackingAllocator;

fn record(delta: isize) {
    let _ = TRACKING.try_with(|t| {
        if t.get() {
            LIVE.with(|l| {
                let v = l.get() + delta;
                l.set(v);
                PEAK.with(|p| {
                    if v > p.get() {
                        p.set(v);
                    }
                });
            });
        }
    });
}

unsafe impl GlobalAlloc for TrackingAllocator {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc(layout) };
        if !p.is_null() {
            record(layout.size() as isize);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) };
        record(-(layout.size() as isize));
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc_zeroed(layout) };
        if !p.is_null() {
            record(layout.size() as isize);
        }
        p
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = unsafe { System.realloc(ptr, layout, new_size) };
        if !p.is_null() {
            record(new_size as isize - layout.size() as isize);
        }
        p
    }
}

/// Runs `f` on the current thread and returns its result with the peak
/// number of heap bytes that were live at once during the call, counting
/// only allocations made inside it. The peak is 0 when
/// [`TrackingAllocator`] is not the global allocator.
pub fn track_peak<T>(f: impl FnOnce() -> T) -> (T, usize) {
    LIVE.with(|l| l.set(0));
    PEAK.with(|p| p.set(0));
    TRACKING.with(|t| t.set(true));
    let out = f();
    TRACKING.with(|t| t.set(false));
    let peak = PEAK.with(|p| p.get()).max(0) as usize;
    (out, peak)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AuditAlgorithm {
    RpluCur,
    C2pluCur,
    QlessQr,
    QrCur,
}

impl std::str::FromStr for AuditAlgorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rplu-cur" => Ok(Self::RpluCur),
            "c2plu-cur" => Ok(Self::C2pluCur),
            "qless-qr" => Ok(Self::QlessQr),
            "qr-cur" => Ok(Self::QrCur),
            other => Err(Error::InvalidArgument(format!(
                "unknown audit algorithm `{other}` (expected rplu-cur, c2plu-cur, qless-qr or qr-cur)"
            ))),
        }
    }
}

impl AuditAlgorithm {
    pub fn name(self) -> &'static str {
        match self {
            Self::RpluCur => "rplu-cur",
            Self::C2pluCur => "c2plu-cur",
            Self::QlessQr => "qless-qr",
            Self::QrCur => "qr-cur",
        }
    }

    /// Products with `A` and `A^*` the algorithm performs at rank `k`.
    pub fn expected_applies(self, k: usize) -> (usize, usize) {
        let qr = if k == 0 { 0 } else { 1 + 3 * (k - 1) };
        match self {
            Self::RpluCur | Self::C2pluCur => (4 * k, 2 * k),
            Self::QlessQr => (qr, qr),
            // Column QR on A, row QR on A^*, then one A and two A^* per row.
            Self::QrCur => (qr + qr + k, qr + qr + 2 * k),
        }
    }
}

#[derive(Clone, Debug)]
pub struct AuditReport {
    pub algorithm: AuditAlgorithm,
    pub n: usize,
    pub k: usize,
    pub counts: CallCounts,
    pub expected: (usize, usize),
    /// Peak live heap bytes divided by [`SCALAR_BYTES`]; zero without the
    /// tracking allocator.
    pub peak_scalars: usize,
    /// `8 (k^2 + n + m)`.
    pub budget: usize,
}

impl AuditReport {
    pub fn applies_match(&self) -> bool {
        (self.counts.applies, self.counts.adjoints) == self.expected
    }

    pub fn memory_ok(&self) -> bool {
        self.peak_scalars <= self.budget
    }

    pub fn passed(&self) -> bool {
        self.applies_match() && self.memory_ok()
    }

    pub const CSV_HEADER: &'static str = "algorithm,n,k,applies_A,applies_At,expected_A,expected_At,row_norm_passes,peak_scalars,budget,pass";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.algorithm.name(),
            self.n,
            self.k,
            self.counts.applies,
            self.counts.adjoints,
            self.expected.0,
            self.expected.1,
            self.counts.row_norm_passes,
            self.peak_scalars,
            self.budget,
            self.passed()
        )
    }
}

/// Toeplitz instance used by the audits: a narrow kernel so that the
/// numerical rank stays well above the audited ranks.
pub fn audit_instance(n: usize) -> Result<DriftedGaussianToeplitz> {
    let mut p = ToeplitzParams::scaled(n, 320.0);
    p.sigma = 5.0;
    DriftedGaussianToeplitz::new(p)
}

/// Runs `algorithm` at rank `k` on [`audit_instance`] and compares product
/// counts and peak memory with the ledger.
pub fn audit_complexity(algorithm: AuditAlgorithm, n: usize, k: usize, seed: u64) -> Result<AuditReport> {
    let a = CountingAccessor::new(audit_instance(n)?);
    let mut rng = RngState::new(seed);
    let (res, peak) = track_peak(|| -> Result<()> {
        match algorithm {
            AuditAlgorithm::RpluCur => cur_build(&a, CurRule::RpluCur, k, 0.0, &mut rng).map(|_| ()),
            AuditAlgorithm::C2pluCur => cur_build(&a, CurRule::C2pluCur, k, 0.0, &mut rng).map(|_| ()),
            AuditAlgorithm::QlessQr => qless_qr(&a, k, QrRule::Random, &mut rng).map(|_| ()),
            AuditAlgorithm::QrCur => qr_cur(&a, k, QrRule::Random, &mut rng).map(|_| ()),
        }
    });
    res?;
    Ok(AuditReport {
        algorithm,
        n,
        k,
        counts: a.counts(),
        expected: algorithm.expected_applies(k),
        peak_scalars: peak.div_ceil(SCALAR_BYTES),
        budget: 8 * (k * k + 2 * n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;

    #[test]
    fn counting_is_transparent() {
        let mut g = RngState::new(9);
        let a = DenseMatrix::from_fn(30, 30, |_, _| g.complex_normal());
        let plain = cur_build(&a, CurRule::RpluCur, 8, 0.0, &mut RngState::new(5)).unwrap();
        let counted_a = CountingAccessor::new(a.clone());
        let counted = cur_build(&counted_a, CurRule::RpluCur, 8, 0.0, &mut RngState::new(5)).unwrap();
        assert_eq!(plain.fact.rows, counted.fact.rows);
        assert_eq!(plain.fact.cols, counted.fact.cols);
        assert_eq!(counted_a.counts().applies, 32);
        assert_eq!(counted_a.counts().adjoints, 16);
        assert_eq!(counted_a.counts().row_norm_passes, 1);
    }

    #[test]
    fn zero_rank_has_no_products() {
        for alg in [AuditAlgorithm::RpluCur, AuditAlgorithm::QlessQr, AuditAlgorithm::QrCur] {
            let r = audit_complexity(alg, 64, 0, 1).unwrap();
            assert_eq!((r.counts.applies, r.counts.adjoints), (0, 0));
            assert!(r.applies_match());
        }
    }

    #[test]
    fn ledgers_match() {
        for alg in [
            AuditAlgorithm::RpluCur,
            AuditAlgorithm::C2pluCur,
            AuditAlgorithm::QlessQr,
            AuditAlgorithm::QrCur,
        ] {
            let r = audit_complexity(alg, 256, 8, 3).unwrap();
            assert!(r.applies_match(), "{alg:?}: {:?} vs {:?}", r.counts, r.expected);
        }
    }
}
