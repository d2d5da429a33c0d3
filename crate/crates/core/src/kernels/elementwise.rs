use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

pub const RELU6_CEILING: f32 = 6.0;

pub fn relu6(input: &Tensor) -> Tensor {
    let mut t = input.clone();
    relu6_in_place(&mut t);
    t
}

pub fn relu6_in_place(t: &mut Tensor) {
    for v in t.data_mut() {
        *v = v.clamp(0.0, RELU6_CEILING);
    }
}

pub fn relu(input: &Tensor) -> Tensor {
    let mut t = input.clone();
    relu_in_place(&mut t);
    t
}

pub fn relu_in_place(t: &mut Tensor) {
    for v in t.data_mut() {
        *v = v.max(0.0);
    }
}

/// Mean over all pixels of each (image, channel), accumulated in f64.
pub fn global_avgpool(input: &Tensor) -> Tensor {
    let s = input.shape();
    let pixels = s.spatial();
    let mut out = Tensor::zeros(Shape {
        height: 1,
        width: 1,
        ..s
    });
    let mut acc = vec![0f64; s.channels];
    for b in 0..s.batch {
        acc.fill(0.0);
        let image = &input.data()[b * pixels * s.channels..][..pixels * s.channels];
        for pixel in image.chunks_exact(s.channels) {
            for (a, &v) in acc.iter_mut().zip(pixel) {
                *a += v as f64;
            }
        }
        for (c, a) in acc.iter().enumerate() {
            out.set(b, 0, 0, c, (a / pixels as f64) as f32);
        }
    }
    out
}

pub fn add_residual(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            expected: a.shape(),
            found: b.shape(),
        });
    }
    let mut out = a.clone();
    for (o, &v) in out.data_mut().iter_mut().zip(b.data()) {
        *o += v;
    }
    Ok(out)
}
