use std::fmt;

use serde::{Deserialize, Serialize};

/// A code in the canonical enumeration.
///
/// Even codes `2m` name machine programs: `m = pad * L + n` selects program
/// `n` of an `L`-program corpus, padded `pad` times. Odd codes
/// `2 * <slot, pad> + 1` name host-generator slots, with `<., .>` the Cantor
/// pairing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Index(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decoded {
    Machine { program: usize, pad: u64 },
    Host { slot: u64, pad: u64 },
}

impl Index {
    pub fn machine(program: usize, pad: u64, corpus_len: usize) -> Self {
        assert!(program < corpus_len, "program {program} outside corpus of {corpus_len}");
        Index(2 * (pad * corpus_len as u64 + program as u64))
    }

    pub fn host(slot: u64, pad: u64) -> Self {
        Index(2 * cantor_pair(slot, pad) + 1)
    }

    pub fn code(self) -> u64 {
        self.0
    }

    pub fn is_host(self) -> bool {
        self.0 % 2 == 1
    }

    pub fn decode(self, corpus_len: usize) -> Decoded {
        if self.is_host() {
            let (slot, pad) = cantor_unpair(self.0 / 2);
            Decoded::Host { slot, pad }
        } else {
            let m = self.0 / 2;
            let l = corpus_len.max(1) as u64;
            Decoded::Machine { program: (m % l) as usize, pad: m / l }
        }
    }

    /// The machine code `m` of an even index.
    pub fn machine_code(self) -> Option<u64> {
        (!self.is_host()).then_some(self.0 / 2)
    }

    /// The unpadded representative of this index.
    pub fn base(self, corpus_len: usize) -> Self {
        match self.decode(corpus_len) {
            Decoded::Machine { program, .. } => Index::machine(program, 0, corpus_len),
            Decoded::Host { slot, .. } => Index::host(slot, 0),
        }
    }
}

impl fmt::Display for Index {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "W{}", self.0)
    }
}

pub fn cantor_pair(a: u64, b: u64) -> u64 {
    let s = a + b;
    s * (s + 1) / 2 + b
}

pub fn cantor_unpair(z: u64) -> (u64, u64) {
    // Largest w with w(w+1)/2 <= z.
    let mut w = (((8.0 * z as f64 + 1.0).sqrt() - 1.0) / 2.0) as u64;
    while w * (w + 1) / 2 > z {
        w -= 1;
    }
    while (w + 1) * (w + 2) / 2 <= z {
        w += 1;
    }
    let b = z - w * (w + 1) / 2;
    (w - b, b)
}

/// Triple code `<<a, b>, c>`, widened so large host indices cannot overflow.
pub fn triple_code(a: u64, b: u64, c: u64) -> u128 {
    let pair = |x: u128, y: u128| {
        let s = x + y;
        s * (s + 1) / 2 + y
    };
    pair(pair(a as u128, b as u128), c as u128)
}
