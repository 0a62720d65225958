#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use spinframe::geometry::ConnectionAtPoint;
use spinframe::solutions::{TypeAPointData, TypeBPointData};
use spinframe::spin_field::{Point, SpinFieldSpec};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

fn coeff(rng: &mut StdRng, amp: f64) -> String {
    format!("({:.4})", rng.gen_range(-amp..amp))
}

/// A smooth, bounded-gradient scalar of the four coordinates.
pub fn smooth_scalar(rng: &mut StdRng) -> String {
    let mut terms = Vec::new();
    for _ in 0..2 {
        let i = rng.gen_range(0..4);
        let j = rng.gen_range(0..4);
        let term = match rng.gen_range(0..4) {
            0 => format!(
                "{}*sin({}*x{i} + {}*x{j})",
                coeff(rng, 0.8),
                coeff(rng, 1.2),
                coeff(rng, 1.2)
            ),
            1 => format!("{}*cos({}*x{i}) ", coeff(rng, 0.8), coeff(rng, 1.2)),
            2 => format!("{}*tanh({}*x{i} + {})", coeff(rng, 0.8), coeff(rng, 1.2), coeff(rng, 0.5)),
            _ => format!("{}*x{i}*x{j} + {}", coeff(rng, 0.4), coeff(rng, 0.3)),
        };
        terms.push(term);
    }
    terms.join(" + ")
}

/// Normalized type-A field `f + sum_mu c_mu e_mu e_n` with a random normal index.
pub fn random_type_a(rng: &mut StdRng) -> SpinFieldSpec {
    let n = rng.gen_range(4..10);
    let g: Vec<String> = (0..4).map(|_| format!("({})", smooth_scalar(rng))).collect();
    let norm = format!("sqrt(1 + {g1}^2 + {g2}^2 + {g3}^2)", g1 = g[1], g2 = g[2], g3 = g[3]);
    let f = format!("sqrt(1 + {g0}^2)/{norm}", g0 = g[0]);
    let c: Vec<String> = g.iter().map(|gi| format!("{gi}/{norm}")).collect();
    SpinFieldSpec::type_a(n, &f, [&c[0], &c[1], &c[2], &c[3]]).expect("generated type-A field")
}

/// Normalized type-B field `f + sum_k c_k e_t e_k` with a random tangent index.
pub fn random_type_b(rng: &mut StdRng) -> SpinFieldSpec {
    let t = rng.gen_range(0..4);
    let active: Vec<bool> = (0..6).map(|_| rng.gen_bool(0.5)).collect();
    let g: Vec<String> = active
        .iter()
        .map(|&on| if on { format!("({})", smooth_scalar(rng)) } else { "0".to_string() })
        .collect();
    let sum: Vec<String> = g.iter().map(|gi| format!("{gi}^2")).collect();
    let norm = format!("sqrt(1 + {})", sum.join(" + "));
    let (f, c): (String, Vec<String>) = if t == 0 {
        (norm, g.clone())
    } else {
        (format!("1/{norm}"), g.iter().map(|gi| format!("{gi}/{norm}")).collect())
    };
    let c: Vec<&str> = c.iter().map(String::as_str).collect();
    SpinFieldSpec::type_b(t, &f, c.try_into().expect("six coefficients")).expect("generated type-B field")
}

pub fn random_family(rng: &mut StdRng) -> SpinFieldSpec {
    if rng.gen_bool(0.5) {
        random_type_a(rng)
    } else {
        random_type_b(rng)
    }
}

/// Product of two random type-A/type-B factors.
pub fn random_product(rng: &mut StdRng) -> SpinFieldSpec {
    SpinFieldSpec::Product {
        factors: vec![random_family(rng), random_family(rng)],
    }
}

pub fn random_point(rng: &mut StdRng, half_width: f64) -> Point {
    std::array::from_fn(|_| rng.gen_range(-half_width..half_width))
}

/// A point with `x1^2 + x2^2 + x3^2 <= r2_max`.
pub fn random_ball_point(rng: &mut StdRng, r2_max: f64) -> Point {
    loop {
        let x = random_point(rng, r2_max.sqrt());
        if x[1] * x[1] + x[2] * x[2] + x[3] * x[3] <= r2_max {
            return x;
        }
    }
}

pub fn r2(x: Point) -> f64 {
    x[1] * x[1] + x[2] * x[2] + x[3] * x[3]
}

/// Arbitrary antisymmetric connection values.
pub fn random_connection(rng: &mut StdRng) -> ConnectionAtPoint {
    let mut w = ConnectionAtPoint::zero();
    for a in 0..4 {
        for i in 0..10 {
            for j in i + 1..10 {
                w.set(a, i, j, rng.gen_range(-1.0..1.0));
            }
        }
    }
    w
}

fn grads<const N: usize>(rng: &mut StdRng) -> [[f64; 4]; N] {
    std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)))
}

/// Normalized type-A point data with arbitrary gradients.
pub fn random_type_a_data(rng: &mut StdRng) -> TypeAPointData {
    let g: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.5..1.5));
    let n = (1.0 + g[1] * g[1] + g[2] * g[2] + g[3] * g[3]).sqrt();
    TypeAPointData {
        normal_index: rng.gen_range(4..10),
        f: (1.0 + g[0] * g[0]).sqrt() / n,
        c: g.map(|v| v / n),
        grad_f: grads::<1>(rng)[0],
        grad_c: grads(rng),
    }
}

/// Normalized type-B point data with arbitrary gradients.
pub fn random_type_b_data(rng: &mut StdRng) -> TypeBPointData {
    let t = rng.gen_range(0..4);
    let g: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-1.5..1.5));
    let s = 1.0 + g.iter().map(|v| v * v).sum::<f64>();
    let (f, c) = if t == 0 {
        (s.sqrt(), g)
    } else {
        (1.0 / s.sqrt(), g.map(|v| v / s.sqrt()))
    };
    TypeBPointData {
        tangent_index: t,
        f,
        c,
        grad_f: grads::<1>(rng)[0],
        grad_c: grads(rng),
    }
}

/// Sign and mask of `e_A e_B` by literally sorting the concatenated index list
/// with adjacent transpositions and contracting equal neighbours.
pub fn permutation_oracle(a: u32, b: u32, metric: &[f64]) -> (f64, u32) {
    let bits = |m: u32| (0..metric.len()).filter(move |&i| m & (1 << i) != 0);
    let mut word: Vec<usize> = bits(a).chain(bits(b)).collect();
    let mut sign = 1.0;
    loop {
        let mut changed = false;
        let mut i = 0;
        while i + 1 < word.len() {
            if word[i] > word[i + 1] {
                word.swap(i, i + 1);
                sign = -sign;
                changed = true;
            } else if word[i] == word[i + 1] {
                sign *= metric[word[i]];
                word.drain(i..i + 2);
                changed = true;
                continue;
            }
            i += 1;
        }
        if !changed {
            break;
        }
    }
    (sign, word.iter().fold(0, |m, &i| m | (1 << i)))
}
