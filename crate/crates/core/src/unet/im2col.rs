//! Patch extraction for convolutions as a custom op with a direct CPU
//! backward (scatter-add), so a convolution costs one gather plus one
//! matrix product in both directions.

use candle_core::{CpuStorage, CustomOp1, Layout, Shape, Tensor, WithDType};

#[derive(Debug, Clone, Copy)]
pub(crate) struct Patches {
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Patches {
    pub fn out_hw(&self) -> (usize, usize) {
        (
            (self.h + 2 * self.pad - self.k) / self.stride + 1,
            (self.w + 2 * self.pad - self.k) / self.stride + 1,
        )
    }

    /// Visit every run of cells that lies inside the image as
    /// `(column start, image start, length)`; consecutive cells of a run are
    /// 1 apart in the columns and `stride` apart in the image. Columns are
    /// `(c·k·k, n·ho·wo)`, the image `(n, c, h, w)`.
    fn for_each_run(&self, mut f: impl FnMut(usize, usize, usize)) {
        let (ho, wo) = self.out_hw();
        let cols = self.n * ho * wo;
        let (k, s, p) = (self.k, self.stride, self.pad);
        for ci in 0..self.c {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (ci * k + ki) * k + kj;
                    // output columns oj with 0 <= oj·s + kj - p < w
                    let lo = p.saturating_sub(kj).div_ceil(s);
                    let hi = ((self.w + p).saturating_sub(kj)).div_ceil(s).min(wo);
                    if lo >= hi {
                        continue;
                    }
                    for b in 0..self.n {
                        let img = (b * self.c + ci) * self.h * self.w;
                        for oi in 0..ho {
                            let r = oi * s + ki;
                            if r < p || r - p >= self.h {
                                continue;
                            }
                            let dst = row * cols + (b * ho + oi) * wo + lo;
                            let src = img + (r - p) * self.w + lo * s + kj - p;
                            f(dst, src, hi - lo);
                        }
                    }
                }
            }
        }
    }

    fn gather<T: WithDType>(&self, src: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols_shape().elem_count()];
        let s = self.stride;
        self.for_each_run(|d, i, len| {
            if s == 1 {
                out[d..d + len].copy_from_slice(&src[i..i + len]);
            } else {
                for (o, v) in out[d..d + len].iter_mut().zip(src[i..].iter().step_by(s)) {
                    *o = *v;
                }
            }
        });
        out
    }

    fn scatter<T: WithDType>(&self, src: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n * self.c * self.h * self.w];
        let s = self.stride;
        self.for_each_run(|d, i, len| {
            for (o, v) in out[i..].iter_mut().step_by(s).zip(&src[d..d + len]) {
                *o += *v;
            }
        });
        out
    }

    fn cols_shape(&self) -> Shape {
        let (ho, wo) = self.out_hw();
        Shape::from((self.c * self.k * self.k, self.n * ho * wo))
    }

}

fn contiguous<'a, T: WithDType>(s: &'a CpuStorage, l: &Layout) -> candle_core::Result<&'a [T]> {
    match l.contiguous_offsets() {
        Some((a, b)) => Ok(&s.as_slice::<T>()?[a..b]),
        None => candle_core::bail!("patch ops need contiguous input"),
    }
}

/// `(n, c, h, w)` image to `(c·k·k, n·ho·wo)` columns.
pub(crate) struct Im2Col(pub Patches);

/// Adjoint of [`Im2Col`]: columns back to an image, summing overlaps.
pub(crate) struct Col2Im(pub Patches);

impl CustomOp1 for Im2Col {
    fn name(&self) -> &'static str {
        "im2col"
    }

    fn cpu_fwd(&self, s: &CpuStorage, l: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let out = match s {
            CpuStorage::F32(_) => CpuStorage::F32(self.0.gather(contiguous::<f32>(s, l)?)),
            CpuStorage::F64(_) => CpuStorage::F64(self.0.gather(contiguous::<f64>(s, l)?)),
            _ => candle_core::bail!("im2col supports f32 and f64"),
        };
        Ok((out, self.0.cols_shape()))
    }

    fn bwd(&self, _arg: &Tensor, _res: &Tensor, grad: &Tensor) -> candle_core::Result<Option<Tensor>> {
        Ok(Some(grad.contiguous()?.apply_op1(Col2Im(self.0))?))
    }
}

impl CustomOp1 for Col2Im {
    fn name(&self) -> &'static str {
        "col2im"
    }

    fn cpu_fwd(&self, s: &CpuStorage, l: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let p = &self.0;
        let out = match s {
            CpuStorage::F32(_) => CpuStorage::F32(p.scatter(contiguous::<f32>(s, l)?)),
            CpuStorage::F64(_) => CpuStorage::F64(p.scatter(contiguous::<f64>(s, l)?)),
            _ => candle_core::bail!("col2im supports f32 and f64"),
        };
        Ok((out, Shape::from((p.n, p.c, p.h, p.w))))
    }

    fn bwd(&self, _arg: &Tensor, _res: &Tensor, grad: &Tensor) -> candle_core::Result<Option<Tensor>> {
        Ok(Some(grad.contiguous()?.apply_op1(Im2Col(self.0))?))
    }
}
