//! Little-endian base-p digit-vector arithmetic.
//!
//! A scalar is a `Vec<u32>` of digits in `[0, p)`, least significant first,
//! of a fixed length `M`, representing an integer modulo `p^M`. These are the
//! building blocks for element components; all higher arithmetic reduces to
//! the routines here. Multiplication uses u128 column accumulators, which is
//! exact for any `u32` prime and any desk-scale digit count.

/// Assert-style validation used by the routines below (debug builds only).
#[inline]
fn debug_check(a: &[u32], p: u32) {
    debug_assert!(a.iter().all(|&d| d < p), "digit out of range for base {p}");
}

/// a += b (mod p^len(a)). `b` may be shorter than `a`; excess carry is dropped.
pub fn add_assign(a: &mut [u32], b: &[u32], p: u32) {
    debug_check(a, p);
    debug_check(b, p);
    let mut carry: u64 = 0;
    for i in 0..a.len() {
        let s = a[i] as u64 + *b.get(i).unwrap_or(&0) as u64 + carry;
        a[i] = (s % p as u64) as u32;
        carry = s / p as u64;
    }
}

/// a -= b (mod p^len(a)).
pub fn sub_assign(a: &mut [u32], b: &[u32], p: u32) {
    debug_check(a, p);
    debug_check(b, p);
    let mut borrow: i64 = 0;
    for i in 0..a.len() {
        let s = a[i] as i64 - *b.get(i).unwrap_or(&0) as i64 - borrow;
        if s < 0 {
            a[i] = (s + p as i64) as u32;
            borrow = 1;
        } else {
            a[i] = s as u32;
            borrow = 0;
        }
    }
}

/// In-place negation mod p^len(a): 0 stays 0; otherwise p^M − a.
pub fn negate(a: &mut [u32], p: u32) {
    debug_check(a, p);
    // Find the first nonzero digit; below it everything stays 0, it maps to
    // p − d, and every digit above maps to p − 1 − d.
    let Some(first) = a.iter().position(|&d| d != 0) else {
        return;
    };
    a[first] = p - a[first];
    for d in a.iter_mut().skip(first + 1) {
        *d = p - 1 - *d;
    }
}

/// Schoolbook product of `a` and `b`, truncated to `out_len` digits
/// (i.e. the product mod p^out_len).
pub fn mul(a: &[u32], b: &[u32], p: u32, out_len: usize) -> Vec<u32> {
    debug_check(a, p);
    debug_check(b, p);
    let mut out = vec![0u32; out_len];
    let mut carry: u128 = 0;
    for k in 0..out_len {
        let mut acc = carry;
        let lo = (k + 1).saturating_sub(b.len());
        let hi = k.min(a.len().saturating_sub(1));
        for i in lo..=hi {
            if i < a.len() && k - i < b.len() {
                acc += a[i] as u128 * b[k - i] as u128;
            }
        }
        out[k] = (acc % p as u128) as u32;
        carry = acc / p as u128;
    }
    out
}

/// Multiply by a small nonnegative scalar, truncated to len(a) digits.
pub fn scale(a: &[u32], c: u32, p: u32) -> Vec<u32> {
    mul(a, &to_digits(c as u128, p, a.len()), p, a.len())
}

/// Index of the first nonzero digit, or None when all digits vanish.
pub fn first_nonzero(a: &[u32]) -> Option<usize> {
    a.iter().position(|&d| d != 0)
}

/// Is the scalar zero (all digits zero)?
pub fn is_zero(a: &[u32]) -> bool {
    a.iter().all(|&d| d == 0)
}

/// Digits of `x` in base p, least significant first, padded/truncated to `len`.
pub fn to_digits(x: u128, p: u32, len: usize) -> Vec<u32> {
    let mut out = vec![0u32; len];
    let mut x = x;
    for d in out.iter_mut() {
        *d = (x % p as u128) as u32;
        x /= p as u128;
    }
    out
}

/// Read a digit vector back as an integer; None if the value would overflow
/// u128 (only possible for long vectors over large p).
pub fn to_u128(a: &[u32], p: u32) -> Option<u128> {
    let mut acc: u128 = 0;
    for &d in a.iter().rev() {
        acc = acc.checked_mul(p as u128)?.checked_add(d as u128)?;
    }
    Some(acc)
}

/// Shift down by `k` digits (divide by p^k). The dropped digits must all be
/// zero — the caller certifies divisibility. The result keeps the original
/// length with zeros shifted in at the top.
pub fn shift_down(a: &[u32], k: usize) -> Vec<u32> {
    assert!(
        a.iter().take(k).all(|&d| d == 0),
        "shift_down: low digits not zero (value not divisible)"
    );
    let mut out = vec![0u32; a.len()];
    for i in k..a.len() {
        out[i - k] = a[i];
    }
    out
}

/// Shift up by `k` digits (multiply by p^k), truncating at the original length.
pub fn shift_up(a: &[u32], k: usize) -> Vec<u32> {
    let mut out = vec![0u32; a.len()];
    for i in 0..a.len().saturating_sub(k) {
        out[i + k] = a[i];
    }
    out
}

/// Multiplicative inverse of a unit (first digit nonzero) mod p^len(a),
/// via Fermat seed mod p and Newton doubling z ← z(2 − a z).
pub fn invert_unit(a: &[u32], p: u32) -> Vec<u32> {
    assert!(a[0] != 0, "invert_unit: not a unit");
    let m = a.len();
    // Seed: a[0]^{-1} mod p by Fermat's little theorem.
    let seed = pow_mod_u64(a[0] as u64, p as u64 - 2, p as u64) as u32;
    let mut z = vec![0u32; m];
    z[0] = seed;
    let two = to_digits(2, p, m);
    // Contact doubles each step: 1 − a z ≡ 0 mod p^{2^k}.
    let mut steps = 0usize;
    let mut reach = 1usize;
    while reach < m {
        reach *= 2;
        steps += 1;
    }
    for _ in 0..steps {
        let az = mul(a, &z, p, m);
        let mut t = two.clone();
        sub_assign(&mut t, &az, p);
        z = mul(&z, &t, p, m);
    }
    debug_assert!({
        let mut check = mul(a, &z, p, m);
        sub_assign(&mut check, &to_digits(1, p, m), p);
        is_zero(&check)
    });
    z
}

/// x^e mod m for u64 inputs (used for Fermat inverses and small powers).
pub fn pow_mod_u64(x: u64, e: u64, m: u64) -> u64 {
    let mut base = (x % m) as u128;
    let m = m as u128;
    let mut acc: u128 = 1 % m;
    let mut e = e;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * base % m;
        }
        base = base * base % m;
        e >>= 1;
    }
    acc as u64
}

/// Deterministic primality test for u64 (trial division by 2, 3, then 6k±1;
/// desk-scale p makes this instant).
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for d in [2u64, 3] {
        if n % d == 0 {
            return n == d;
        }
    }
    let mut d = 5u64;
    while d.saturating_mul(d) <= n {
        if n % d == 0 || n % (d + 2) == 0 {
            return false;
        }
        d += 6;
    }
    true
}
