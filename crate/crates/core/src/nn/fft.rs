//! Two-dimensional real FFTs on a small torus, used by the convolution
//! kernels. Spectra are stored column-major over the half spectrum:
//! index `kw * h + kh` with `kw < w / 2 + 1`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;
use std::sync::Arc;

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

pub(crate) struct Fft2 {
    h: usize,
    w: usize,
    wc: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    scratch: RefCell<Scratch>,
}

struct Scratch {
    real_row: Vec<f64>,
    cplx_row: Vec<Complex64>,
    r2c: Vec<Complex64>,
    c2r: Vec<Complex64>,
    col: Vec<Complex64>,
    spec: Vec<Complex64>,
}

thread_local! {
    static PLANS: RefCell<HashMap<(usize, usize), Rc<Fft2>>> = RefCell::new(HashMap::new());
}

impl Fft2 {
    pub(crate) fn plan(h: usize, w: usize) -> Rc<Fft2> {
        PLANS.with(|plans| {
            plans
                .borrow_mut()
                .entry((h, w))
                .or_insert_with(|| {
                    let mut real = RealFftPlanner::<f64>::new();
                    let mut cplx = FftPlanner::<f64>::new();
                    let r2c = real.plan_fft_forward(w);
                    let c2r = real.plan_fft_inverse(w);
                    let col_fwd = cplx.plan_fft_forward(h);
                    let col_inv = cplx.plan_fft_inverse(h);
                    let col_len = col_fwd.get_inplace_scratch_len().max(col_inv.get_inplace_scratch_len());
                    let scratch = Scratch {
                        real_row: vec![0.0; w],
                        cplx_row: vec![Complex64::new(0.0, 0.0); w / 2 + 1],
                        r2c: r2c.make_scratch_vec(),
                        c2r: c2r.make_scratch_vec(),
                        col: vec![Complex64::new(0.0, 0.0); col_len],
                        spec: vec![Complex64::new(0.0, 0.0); (w / 2 + 1) * h],
                    };
                    Rc::new(Fft2 {
                        h,
                        w,
                        wc: w / 2 + 1,
                        r2c,
                        c2r,
                        col_fwd,
                        col_inv,
                        scratch: RefCell::new(scratch),
                    })
                })
                .clone()
        })
    }

    /// Number of complex bins in a spectrum.
    pub(crate) fn bins(&self) -> usize {
        self.wc * self.h
    }

    /// Forward transform of an `h x w` row-major plane into `out`.
    pub(crate) fn forward(&self, plane: &[f64], out: &mut [Complex64]) {
        debug_assert_eq!(plane.len(), self.h * self.w);
        debug_assert_eq!(out.len(), self.bins());
        let mut guard = self.scratch.borrow_mut();
        let Scratch {
            real_row,
            cplx_row,
            r2c,
            col,
            ..
        } = &mut *guard;
        for r in 0..self.h {
            real_row.copy_from_slice(&plane[r * self.w..(r + 1) * self.w]);
            self.r2c
                .process_with_scratch(real_row, cplx_row, r2c)
                .expect("buffer sizes match the plan");
            for (kw, z) in cplx_row.iter().enumerate() {
                out[kw * self.h + r] = *z;
            }
        }
        self.col_fwd.process_with_scratch(out, col);
    }

    /// Inverse transform including the `1 / (h w)` scaling. `spec` is
    /// used as scratch.
    pub(crate) fn inverse(&self, spec: &mut [Complex64], plane: &mut [f64]) {
        debug_assert_eq!(spec.len(), self.bins());
        debug_assert_eq!(plane.len(), self.h * self.w);
        let mut guard = self.scratch.borrow_mut();
        let Scratch {
            real_row: row_out,
            cplx_row: row_in,
            c2r,
            col,
            ..
        } = &mut *guard;
        self.col_inv.process_with_scratch(spec, col);
        let scale = 1.0 / (self.h * self.w) as f64;
        for r in 0..self.h {
            for (kw, z) in row_in.iter_mut().enumerate() {
                *z = spec[kw * self.h + r];
            }
            // DC and Nyquist bins of a real row are real up to rounding
            row_in[0].im = 0.0;
            if self.w.is_multiple_of(2) {
                row_in[self.wc - 1].im = 0.0;
            }
            self.c2r
                .process_with_scratch(row_in, row_out, c2r)
                .expect("buffer sizes match the plan");
            for (dst, v) in plane[r * self.w..(r + 1) * self.w].iter_mut().zip(row_out.iter()) {
                *dst = v * scale;
            }
        }
    }
}

/// Spectra of many planes with real and imaginary parts in separate
/// arrays, so the per-bin products vectorize.
pub(crate) struct Spectra {
    pub(crate) re: Vec<f64>,
    pub(crate) im: Vec<f64>,
    bins: usize,
}

impl Spectra {
    pub(crate) fn zeros(planes: usize, bins: usize) -> Self {
        Self {
            re: vec![0.0; planes * bins],
            im: vec![0.0; planes * bins],
            bins,
        }
    }

    pub(crate) fn plane(&self, i: usize) -> (&[f64], &[f64]) {
        let r = i * self.bins..(i + 1) * self.bins;
        (&self.re[r.clone()], &self.im[r])
    }

    fn plane_mut(&mut self, i: usize) -> (&mut [f64], &mut [f64]) {
        let r = i * self.bins..(i + 1) * self.bins;
        (&mut self.re[r.clone()], &mut self.im[r])
    }
}

impl Fft2 {
    /// Forward transform of `plane` into plane `i` of `out`.
    pub(crate) fn forward_into(&self, plane: &[f64], out: &mut Spectra, i: usize) {
        let mut spec = std::mem::take(&mut self.scratch.borrow_mut().spec);
        self.forward(plane, &mut spec);
        let (re, im) = out.plane_mut(i);
        for ((z, r), m) in spec.iter().zip(re).zip(im) {
            *r = z.re;
            *m = z.im;
        }
        self.scratch.borrow_mut().spec = spec;
    }

    /// Inverse transform of a split spectrum.
    pub(crate) fn inverse_from(&self, re: &[f64], im: &[f64], plane: &mut [f64]) {
        let mut spec = std::mem::take(&mut self.scratch.borrow_mut().spec);
        for ((z, &r), &m) in spec.iter_mut().zip(re).zip(im) {
            *z = Complex64::new(r, m);
        }
        self.inverse(&mut spec, plane);
        self.scratch.borrow_mut().spec = spec;
    }
}

/// `acc += a * conj(b)` bin by bin.
pub(crate) fn mac_conj(acc: (&mut [f64], &mut [f64]), a: (&[f64], &[f64]), b: (&[f64], &[f64])) {
    let (acc_re, acc_im) = acc;
    let n = acc_re.len();
    let (ar, ai, br, bi) = (&a.0[..n], &a.1[..n], &b.0[..n], &b.1[..n]);
    let acc_im = &mut acc_im[..n];
    for j in 0..n {
        acc_re[j] += ar[j] * br[j] + ai[j] * bi[j];
        acc_im[j] += ai[j] * br[j] - ar[j] * bi[j];
    }
}

/// `acc += a * b` bin by bin.
pub(crate) fn mac(acc: (&mut [f64], &mut [f64]), a: (&[f64], &[f64]), b: (&[f64], &[f64])) {
    let (acc_re, acc_im) = acc;
    let n = acc_re.len();
    let (ar, ai, br, bi) = (&a.0[..n], &a.1[..n], &b.0[..n], &b.1[..n]);
    let acc_im = &mut acc_im[..n];
    for j in 0..n {
        acc_re[j] += ar[j] * br[j] - ai[j] * bi[j];
        acc_im[j] += ar[j] * bi[j] + ai[j] * br[j];
    }
}
