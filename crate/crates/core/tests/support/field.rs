//! Reference GF(2^8) arithmetic: shift-and-add multiplication, inversion by
//! exponentiation and Gaussian elimination. Shares nothing with the library.

pub fn mul(mut a: u8, mut b: u8) -> u8 {
    let mut p = 0u8;
    while b != 0 {
        if b & 1 != 0 {
            p ^= a;
        }
        let carry = a & 0x80 != 0;
        a <<= 1;
        if carry {
            a ^= 0x1b;
        }
        b >>= 1;
    }
    p
}

pub fn pow(a: u8, mut e: u32) -> u8 {
    let (mut base, mut acc) = (a, 1u8);
    while e > 0 {
        if e & 1 != 0 {
            acc = mul(acc, base);
        }
        base = mul(base, base);
        e >>= 1;
    }
    acc
}

/// `a^254`, the inverse of a non-zero element.
pub fn inv(a: u8) -> u8 {
    assert_ne!(a, 0);
    pow(a, 254)
}

pub fn eval(coeffs: &[u8], x: u8) -> u8 {
    let mut acc = 0u8;
    let mut xp = 1u8;
    for &c in coeffs {
        acc ^= mul(c, xp);
        xp = mul(xp, x);
    }
    acc
}

/// Solves `A c = y` over the field, or `None` if `A` is singular.
pub fn solve(mut a: Vec<Vec<u8>>, mut y: Vec<u8>) -> Option<Vec<u8>> {
    let n = y.len();
    for col in 0..n {
        let piv = (col..n).find(|&r| a[r][col] != 0)?;
        a.swap(col, piv);
        y.swap(col, piv);
        let s = inv(a[col][col]);
        for k in 0..n {
            a[col][k] = mul(a[col][k], s);
        }
        y[col] = mul(y[col], s);
        for r in 0..n {
            if r != col && a[r][col] != 0 {
                let m = a[r][col];
                for k in 0..n {
                    a[r][k] ^= mul(m, a[col][k]);
                }
                y[r] ^= mul(m, y[col]);
            }
        }
    }
    Some(y)
}

/// Coefficients of the unique polynomial of degree `< points.len()` through
/// `points`.
pub fn interpolate(points: &[(u8, u8)]) -> Option<Vec<u8>> {
    let rows = points.iter().map(|&(x, _)| (0..points.len() as u32).map(|k| pow(x, k)).collect()).collect();
    solve(rows, points.iter().map(|p| p.1).collect())
}

/// Coefficients `c_1..c_{deg}` that complete secret byte `s` through the
/// observed points, for a polynomial of degree `points.len()` with `c_0 = s`.
pub fn complete_with_secret(s: u8, points: &[(u8, u8)]) -> Option<Vec<u8>> {
    let k = points.len() as u32;
    let rows = points.iter().map(|&(x, _)| (1..=k).map(|e| pow(x, e)).collect()).collect();
    let rhs = points.iter().map(|&(_, y)| y ^ s).collect();
    let tail = solve(rows, rhs)?;
    let mut c = vec![s];
    c.extend(tail);
    Some(c)
}
