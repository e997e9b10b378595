//! Interpreters: deterministic bit-string to bit-string transforms.
//!
//! Run-length coding stores each maximal run as `(count, byte)` pairs with
//! `count` in 1..=255. The XOR cipher draws one keystream byte per input
//! byte from a 64-bit linear congruential generator seeded by the key.
//! It only demonstrates the interpreter slot and offers **no security**.

use thiserror::Error;

use crate::types::BitString;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InterpretError {
    #[error("malformed input at byte {offset}: {reason}")]
    MalformedInput { offset: usize, reason: &'static str },
}

pub trait Interpreter: Send + Sync {
    fn interpret(&self, input: &[u8]) -> Result<BitString, InterpretError>;
}

impl<I: Interpreter + ?Sized> Interpreter for Box<I> {
    fn interpret(&self, input: &[u8]) -> Result<BitString, InterpretError> {
        (**self).interpret(input)
    }
}

impl<I: Interpreter + ?Sized> Interpreter for &I {
    fn interpret(&self, input: &[u8]) -> Result<BitString, InterpretError> {
        (**self).interpret(input)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl Interpreter for Identity {
    fn interpret(&self, input: &[u8]) -> Result<BitString, InterpretError> {
        Ok(input.to_vec())
    }
}

pub fn rle_compress(input: &[u8]) -> BitString {
    let mut out = Vec::with_capacity(input.len().min(1 << 16));
    let mut rest = input;
    while let Some(&byte) = rest.first() {
        let run = rest.iter().take(255).take_while(|&&b| b == byte).count();
        out.push(run as u8);
        out.push(byte);
        rest = &rest[run..];
    }
    out
}

pub fn rle_expand(input: &[u8]) -> Result<BitString, InterpretError> {
    if input.len() % 2 != 0 {
        return Err(InterpretError::MalformedInput {
            offset: input.len() - 1,
            reason: "odd length",
        });
    }
    let total: usize = input.chunks_exact(2).map(|p| p[0] as usize).sum();
    let mut out = Vec::with_capacity(total);
    for (i, pair) in input.chunks_exact(2).enumerate() {
        if pair[0] == 0 {
            return Err(InterpretError::MalformedInput {
                offset: 2 * i,
                reason: "zero run count",
            });
        }
        out.extend(std::iter::repeat_n(pair[1], pair[0] as usize));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RleCompress;

impl Interpreter for RleCompress {
    fn interpret(&self, input: &[u8]) -> Result<BitString, InterpretError> {
        Ok(rle_compress(input))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RleExpand;

impl Interpreter for RleExpand {
    fn interpret(&self, input: &[u8]) -> Result<BitString, InterpretError> {
        rle_expand(input)
    }
}

const LCG_MULTIPLIER: u64 = 6364136223846793005;
const LCG_INCREMENT: u64 = 1442695040888963407;

/// XOR with an LCG keystream. Not cryptographically secure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct XorCipher {
    key: [u8; 8],
}

impl XorCipher {
    pub fn new(key: [u8; 8]) -> Self {
        XorCipher { key }
    }

    /// Iterator over keystream bytes: the top byte of each successive state.
    pub fn keystream(&self) -> impl Iterator<Item = u8> {
        let mut state = u64::from_be_bytes(self.key);
        std::iter::repeat_with(move || {
            state = state.wrapping_mul(LCG_MULTIPLIER).wrapping_add(LCG_INCREMENT);
            (state >> 56) as u8
        })
    }

    pub fn apply(&self, input: &[u8]) -> BitString {
        input.iter().zip(self.keystream()).map(|(b, k)| b ^ k).collect()
    }
}

impl Interpreter for XorCipher {
    fn interpret(&self, input: &[u8]) -> Result<BitString, InterpretError> {
        Ok(self.apply(input))
    }
}

/// Runs `first`, then feeds its output to `second`.
#[derive(Debug, Clone, Copy)]
pub struct Compose<A, B> {
    first: A,
    second: B,
}

pub fn compose<A: Interpreter, B: Interpreter>(first: A, second: B) -> Compose<A, B> {
    Compose { first, second }
}

impl<A: Interpreter, B: Interpreter> Interpreter for Compose<A, B> {
    fn interpret(&self, input: &[u8]) -> Result<BitString, InterpretError> {
        self.second.interpret(&self.first.interpret(input)?)
    }
}

/// A run-time assembled chain of interpreters, applied left to right.
#[derive(Default)]
pub struct Pipeline {
    stages: Vec<Box<dyn Interpreter>>,
}

impl Pipeline {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn then(mut self, stage: impl Interpreter + 'static) -> Self {
        self.stages.push(Box::new(stage));
        self
    }
}

impl Interpreter for Pipeline {
    fn interpret(&self, input: &[u8]) -> Result<BitString, InterpretError> {
        let mut data = input.to_vec();
        for stage in &self.stages {
            data = stage.interpret(&data)?;
        }
        Ok(data)
    }
}
