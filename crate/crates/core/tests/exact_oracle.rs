//! Stationary distributions against exact rational arithmetic.

use num_bigint::BigInt;
use num_rational::BigRational;
use slowfast::switching::check_weak_irreducibility;
use slowfast::Matrix64;

/// Solves `nu Q = 0`, `sum nu = 1` exactly; `q` holds integers over `den`.
fn exact(q: &[Vec<i64>], den: i64) -> Vec<BigRational> {
    let n = q.len();
    let r = |v: i64| BigRational::new(BigInt::from(v), BigInt::from(den));
    let one = || BigRational::from_integer(BigInt::from(1));
    let zero = || BigRational::from_integer(BigInt::from(0));
    let mut a: Vec<Vec<BigRational>> = (0..n)
        .map(|i| {
            let mut row: Vec<_> = (0..n).map(|j| if i == n - 1 { one() } else { r(q[j][i]) }).collect();
            row.push(if i == n - 1 { one() } else { zero() });
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n).find(|&k| a[k][c] != zero()).unwrap();
        a.swap(c, p);
        let pivot = a[c][c].clone();
        for v in a[c].iter_mut() {
            *v = &*v / &pivot;
        }
        let pivot_row = a[c].clone();
        for (k, row) in a.iter_mut().enumerate() {
            if k != c && row[c] != zero() {
                let f = row[c].clone();
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v = &*v - &f * p;
                }
            }
        }
    }
    a.into_iter().map(|row| row[n].clone()).collect()
}

fn as_f64(r: &BigRational) -> f64 {
    r.numer().to_string().parse::<f64>().unwrap() / r.denom().to_string().parse::<f64>().unwrap()
}

#[test]
fn matches_exact_rational_solution() {
    let cases: Vec<Vec<Vec<i64>>> = vec![
        vec![vec![-8, 8], vec![16, -16]],
        vec![vec![-3, 1, 2], vec![5, -7, 2], vec![1, 1, -2]],
        vec![vec![-1, 1, 0, 0], vec![0, -3, 3, 0], vec![0, 0, -9, 9], vec![13, 0, 0, -13]],
        vec![
            vec![-6, 1, 2, 3, 0],
            vec![0, -1, 1, 0, 0],
            vec![4, 0, -5, 0, 1],
            vec![1, 1, 1, -4, 1],
            vec![0, 0, 0, 7, -7],
        ],
    ];
    for q in cases {
        let m = Matrix64::from_rows(&q.iter().map(|r| r.iter().map(|&v| v as f64 / 8.0).collect::<Vec<_>>()).collect::<Vec<_>>()).unwrap();
        let nu = check_weak_irreducibility(&m).unwrap();
        for (a, e) in nu.iter().zip(exact(&q, 8)) {
            assert!((a - as_f64(&e)).abs() <= 1e-12, "{a} vs {e}");
        }
    }
}

#[test]
fn reducible_generator_is_rejected() {
    let q = Matrix64::from_rows(&[[-1.0, 1.0, 0.0, 0.0], [1.0, -1.0, 0.0, 0.0], [0.0, 0.0, -1.0, 1.0], [0.0, 0.0, 1.0, -1.0]]).unwrap();
    assert!(check_weak_irreducibility(&q).is_err());
}
