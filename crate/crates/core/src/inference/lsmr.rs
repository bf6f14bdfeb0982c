//! LSMR (Fong and Saunders) without damping.

use alloc::vec;
use alloc::vec::Vec;

use super::{norm2, residual, Estimate};
use crate::matrix::LinOp;

const CONLIM: f64 = 1e8;

fn sym_ortho(a: f64, b: f64) -> (f64, f64, f64) {
    if b == 0.0 {
        return (if a == 0.0 { 1.0 } else { a.signum() }, 0.0, a.abs());
    }
    if a == 0.0 {
        return (0.0, b.signum(), b.abs());
    }
    if b.abs() > a.abs() {
        let tau = a / b;
        let s = b.signum() / libm::sqrt(1.0 + tau * tau);
        let c = s * tau;
        (c, s, b / s)
    } else {
        let tau = b / a;
        let c = a.signum() / libm::sqrt(1.0 + tau * tau);
        let s = c * tau;
        (c, s, a / c)
    }
}

fn scale(v: &mut [f64], s: f64) {
    v.iter_mut().for_each(|x| *x *= s);
}

/// Minimizes `||A x - b||_2` from a zero start. `tol` is used for both the
/// residual and the normal-equation stopping tests.
pub fn lsmr(a: &LinOp, b: &[f64], tol: f64, max_iter: usize) -> Estimate {
    let n = a.cols();
    let mut x = vec![0.0; n];
    let mut u = b.to_vec();
    let mut beta = norm2(&u);
    let mut v: Vec<f64>;
    let mut alpha;
    if beta > 0.0 {
        scale(&mut u, 1.0 / beta);
        v = a.apply_t(&u);
        alpha = norm2(&v);
    } else {
        v = vec![0.0; n];
        alpha = 0.0;
    }
    if alpha > 0.0 {
        scale(&mut v, 1.0 / alpha);
    }
    let normb = beta;
    if alpha * beta == 0.0 {
        return Estimate {
            x_hat: x,
            iterations: 0,
            residual_norm: beta,
            converged: true,
        };
    }

    let mut zetabar = alpha * beta;
    let mut alphabar = alpha;
    let mut rho = 1.0;
    let mut rhobar = 1.0;
    let mut cbar = 1.0;
    let mut sbar = 0.0;
    let mut h = v.clone();
    let mut hbar = vec![0.0; n];

    let mut betadd = beta;
    let mut betad = 0.0;
    let mut rhodold = 1.0;
    let mut tautildeold = 0.0;
    let mut thetatilde = 0.0;
    let mut zeta = 0.0;

    let mut norm_a2 = alpha * alpha;
    let mut maxrbar: f64 = 0.0;
    let mut minrbar: f64 = 1e100;
    let mut itn = 0;
    let mut istop = 0;

    while itn < max_iter {
        itn += 1;
        let av = a.apply(&v);
        for (ui, avi) in u.iter_mut().zip(av) {
            *ui = avi - alpha * *ui;
        }
        beta = norm2(&u);
        if beta > 0.0 {
            scale(&mut u, 1.0 / beta);
            let atu = a.apply_t(&u);
            for (vi, ai) in v.iter_mut().zip(atu) {
                *vi = ai - beta * *vi;
            }
            alpha = norm2(&v);
            if alpha > 0.0 {
                scale(&mut v, 1.0 / alpha);
            }
        }

        let rhoold = rho;
        let (c, s, r) = sym_ortho(alphabar, beta);
        rho = r;
        let thetanew = s * alpha;
        alphabar = c * alpha;

        let rhobarold = rhobar;
        let zetaold = zeta;
        let thetabar = sbar * rho;
        let rhotemp = cbar * rho;
        let (cb, sb, rb) = sym_ortho(cbar * rho, thetanew);
        cbar = cb;
        sbar = sb;
        rhobar = rb;
        zeta = cbar * zetabar;
        zetabar = -sbar * zetabar;

        let f = thetabar * rho / (rhoold * rhobarold);
        for (hb, hi) in hbar.iter_mut().zip(&h) {
            *hb = hi - f * *hb;
        }
        let f = zeta / (rho * rhobar);
        for (xi, hb) in x.iter_mut().zip(&hbar) {
            *xi += f * hb;
        }
        let f = thetanew / rho;
        for (hi, vi) in h.iter_mut().zip(&v) {
            *hi = vi - f * *hi;
        }

        let betaacute = betadd;
        let betahat = c * betaacute;
        betadd = -s * betaacute;
        let thetatildeold = thetatilde;
        let (ctildeold, stildeold, rhotildeold) = sym_ortho(rhodold, thetabar);
        thetatilde = stildeold * rhobar;
        rhodold = ctildeold * rhobar;
        betad = -stildeold * betad + ctildeold * betahat;
        tautildeold = (zetaold - thetatildeold * tautildeold) / rhotildeold;
        let taud = (zeta - thetatilde * tautildeold) / rhodold;
        let normr = libm::sqrt((betad - taud) * (betad - taud) + betadd * betadd);

        norm_a2 += beta * beta;
        let norm_a = libm::sqrt(norm_a2);
        norm_a2 += alpha * alpha;
        maxrbar = maxrbar.max(rhobarold);
        if itn > 1 {
            minrbar = minrbar.min(rhobarold);
        }
        let cond_a = maxrbar.max(rhotemp) / minrbar.min(rhotemp);

        let normar = zetabar.abs();
        let normx = norm2(&x);
        let test1 = normr / normb;
        let test2 = if norm_a * normr != 0.0 { normar / (norm_a * normr) } else { f64::INFINITY };
        let test3 = 1.0 / cond_a;
        let t1 = test1 / (1.0 + norm_a * normx / normb);
        let rtol = tol + tol * norm_a * normx / normb;

        if 1.0 + test3 <= 1.0 {
            istop = 6;
        }
        if 1.0 + test2 <= 1.0 {
            istop = 5;
        }
        if 1.0 + t1 <= 1.0 {
            istop = 4;
        }
        if test3 <= 1.0 / CONLIM {
            istop = 3;
        }
        if test2 <= tol {
            istop = 2;
        }
        if test1 <= rtol {
            istop = 1;
        }
        if istop > 0 {
            break;
        }
    }
    let r = residual(a, &x, b);
    Estimate {
        x_hat: x,
        iterations: itn,
        residual_norm: norm2(&r),
        converged: matches!(istop, 1 | 2 | 4 | 5),
    }
}
