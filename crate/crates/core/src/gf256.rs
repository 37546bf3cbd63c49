//! Arithmetic in GF(2^8) with the AES reduction polynomial `x^8+x^4+x^3+x+1`.

const POLY: u16 = 0x11b;

struct Tables {
    exp: [u8; 512],
    log: [u8; 256],
}

const fn build_tables() -> Tables {
    let mut exp = [0u8; 512];
    let mut log = [0u8; 256];
    let mut x: u16 = 1;
    let mut i = 0;
    while i < 255 {
        exp[i] = x as u8;
        log[x as usize] = i as u8;
        // multiply by the generator 3 = x + 1
        let mut y = (x << 1) ^ x;
        if y & 0x100 != 0 {
            y ^= POLY;
        }
        x = y;
        i += 1;
    }
    while i < 512 {
        exp[i] = exp[i - 255];
        i += 1;
    }
    Tables { exp, log }
}

static TABLES: Tables = build_tables();

#[inline]
pub fn add(a: u8, b: u8) -> u8 {
    a ^ b
}

#[inline]
pub fn mul(a: u8, b: u8) -> u8 {
    if a == 0 || b == 0 {
        return 0;
    }
    let l = TABLES.log[a as usize] as usize + TABLES.log[b as usize] as usize;
    TABLES.exp[l]
}

/// Multiplicative inverse. Panics on zero.
#[inline]
pub fn inv(a: u8) -> u8 {
    assert!(a != 0, "zero has no inverse in GF(256)");
    TABLES.exp[255 - TABLES.log[a as usize] as usize]
}

#[inline]
pub fn div(a: u8, b: u8) -> u8 {
    mul(a, inv(b))
}

/// Horner evaluation; `coeffs[0]` is the constant term.
pub fn eval(coeffs: &[u8], x: u8) -> u8 {
    coeffs.iter().rev().fold(0, |acc, &c| add(mul(acc, x), c))
}

/// Lagrange weights for evaluating at zero the polynomial through `xs`.
pub fn lagrange_at_zero(xs: &[u8]) -> Vec<u8> {
    xs.iter()
        .enumerate()
        .map(|(j, &xj)| {
            let mut num = 1u8;
            let mut den = 1u8;
            for (m, &xm) in xs.iter().enumerate() {
                if m != j {
                    num = mul(num, xm);
                    den = mul(den, add(xm, xj));
                }
            }
            div(num, den)
        })
        .collect()
}

/// Coefficients of the Lagrange basis polynomials for the points `xs`:
/// `basis[j][k]` is the `x^k` coefficient of `L_j`.
pub fn lagrange_basis(xs: &[u8]) -> Vec<Vec<u8>> {
    let k = xs.len();
    xs.iter()
        .enumerate()
        .map(|(j, &xj)| {
            let mut poly = vec![0u8; k];
            poly[0] = 1;
            let mut deg = 0;
            let mut den = 1u8;
            for (m, &xm) in xs.iter().enumerate() {
                if m == j {
                    continue;
                }
                // poly *= (x + xm)
                for d in (0..=deg).rev() {
                    let c = poly[d];
                    poly[d + 1] = add(poly[d + 1], c);
                    poly[d] = mul(c, xm);
                }
                deg += 1;
                den = mul(den, add(xj, xm));
            }
            let scale = inv(den);
            poly.iter().map(|&c| mul(c, scale)).collect()
        })
        .collect()
}
