use super::joe_kuo::JOE_KUO;
use crate::error::{Error, Result};

/// Maximum number of Sobol dimensions with embedded direction numbers.
pub const MAX_SOBOL_DIMS: usize = 64;

/// 32-bit Sobol direction numbers, one row of 32 per dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct SobolTable {
    direction_numbers: Vec<[u32; 32]>,
}

impl SobolTable {
    /// Direction numbers for the first `dims` dimensions (at most 64).
    pub fn new(dims: usize) -> Result<Self> {
        if dims == 0 || dims > MAX_SOBOL_DIMS {
            return Err(Error::Config(format!(
                "Sobol table supports 1..={MAX_SOBOL_DIMS} dimensions, requested {dims}"
            )));
        }
        let mut direction_numbers = Vec::with_capacity(dims);
        direction_numbers.push(std::array::from_fn(|k| 1u32 << (31 - k)));
        for &(s, a, m) in JOE_KUO.iter().take(dims - 1) {
            direction_numbers.push(directions(s, a, m));
        }
        let table = Self { direction_numbers };
        table.validate()?;
        Ok(table)
    }

    pub fn dims(&self) -> usize {
        self.direction_numbers.len()
    }

    /// Every direction number `v_k = m_k << (31 - k)` must come from an odd
    /// `m_k`: bit `31 - k` set and nothing below it. This keeps each
    /// dimension's generator matrix triangular with a unit diagonal.
    pub fn validate(&self) -> Result<()> {
        for (d, row) in self.direction_numbers.iter().enumerate() {
            for (k, &v) in row.iter().enumerate() {
                if (v >> (31 - k)) & 1 != 1 || v & ((1u64 << (31 - k)) - 1) as u32 != 0 {
                    return Err(Error::Config(format!(
                        "Sobol direction number {k} of dimension {d} is malformed ({v:#010x})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Raw 32-bit sample; `dim` must be in range.
    #[inline]
    pub fn sample_bits(&self, index: u32, dim: usize) -> u32 {
        let v = &self.direction_numbers[dim];
        let mut x = 0u32;
        let mut i = index;
        let mut k = 0;
        while i != 0 {
            if i & 1 != 0 {
                x ^= v[k];
            }
            i >>= 1;
            k += 1;
        }
        x
    }

    #[inline]
    pub fn sample(&self, index: u32, dim: usize) -> f64 {
        self.sample_bits(index, dim) as f64 * (1.0 / 4_294_967_296.0)
    }
}

fn directions(s: u32, a: u32, m: &[u32]) -> [u32; 32] {
    let s = s as usize;
    let mut v = [0u32; 32];
    for k in 0..32 {
        v[k] = if k < s {
            m[k] << (31 - k)
        } else {
            let mut x = v[k - s] ^ (v[k - s] >> s);
            for j in 1..s {
                if (a >> (s - 1 - j)) & 1 == 1 {
                    x ^= v[k - j];
                }
            }
            x
        };
    }
    v
}

/// Sobol sample `index` in dimension `dim`, in `[0, 1)`.
pub fn sobol_sample(index: u32, dim: usize, table: &SobolTable) -> Result<f64> {
    if dim >= table.dims() {
        return Err(Error::Config(format!(
            "Sobol dimension {dim} out of range for a {}-dimensional table",
            table.dims()
        )));
    }
    Ok(table.sample(index, dim))
}
