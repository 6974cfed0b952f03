//! Software emulation of reduced-precision binary floating-point formats.
//!
//! Values are carried in `f64` and quantized to the target format with
//! round-to-nearest, ties-to-even. An expression [`Plan`] is a fixed tape of
//! elementary operations that can be replayed under a format and a
//! [`RoundingMode`], which is how reduced-precision forward passes are
//! modelled.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FloatFormat {
    exponent_bits: u32,
    significand_bits: u32,
    supports_subnormals: bool,
}

impl FloatFormat {
    pub const BF16: FloatFormat = FloatFormat::ieee(8, 7);
    pub const F16: FloatFormat = FloatFormat::ieee(5, 10);
    pub const F32: FloatFormat = FloatFormat::ieee(8, 23);
    pub const F64: FloatFormat = FloatFormat::ieee(11, 52);

    const fn ieee(exponent_bits: u32, significand_bits: u32) -> Self {
        Self { exponent_bits, significand_bits, supports_subnormals: true }
    }

    /// `significand_bits` counts the stored bits, excluding the implicit one.
    pub fn new(exponent_bits: u32, significand_bits: u32, supports_subnormals: bool) -> Result<Self> {
        if !(2..=11).contains(&exponent_bits) || !(1..=52).contains(&significand_bits) {
            return Err(Error::Domain(format!(
                "format e{exponent_bits}m{significand_bits} is not representable in f64"
            )));
        }
        Ok(Self { exponent_bits, significand_bits, supports_subnormals })
    }

    pub fn exponent_bits(self) -> u32 {
        self.exponent_bits
    }

    pub fn significand_bits(self) -> u32 {
        self.significand_bits
    }

    pub fn supports_subnormals(self) -> bool {
        self.supports_subnormals
    }

    pub fn is_f64(self) -> bool {
        self.exponent_bits == 11 && self.significand_bits == 52 && self.supports_subnormals
    }

    fn max_exponent(self) -> i32 {
        (1 << (self.exponent_bits - 1)) - 1
    }

    fn min_exponent(self) -> i32 {
        1 - self.max_exponent()
    }

    pub fn max_finite(self) -> f64 {
        (2.0 - pow2(-(self.significand_bits as i32))) * pow2(self.max_exponent())
    }

    pub fn min_normal(self) -> f64 {
        pow2(self.min_exponent())
    }

    pub fn min_subnormal(self) -> f64 {
        pow2(self.min_exponent() - self.significand_bits as i32)
    }

    pub fn name(self) -> String {
        match self {
            f if f == Self::F64 => "f64".into(),
            f if f == Self::F32 => "f32".into(),
            f if f == Self::F16 => "f16".into(),
            f if f == Self::BF16 => "bf16".into(),
            f => format!("e{}m{}", f.exponent_bits, f.significand_bits),
        }
    }
}

impl fmt::Display for FloatFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for FloatFormat {
    type Err = Error;

    /// Accepts `f64`, `f32`, `f16`, `bf16` and custom `e<E>m<M>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f64" => Ok(Self::F64),
            "f32" => Ok(Self::F32),
            "f16" => Ok(Self::F16),
            "bf16" => Ok(Self::BF16),
            _ => {
                let bad = || Error::Domain(format!("unknown float format `{s}`"));
                let rest = s.strip_prefix('e').ok_or_else(bad)?;
                let (e, m) = rest.split_once('m').ok_or_else(bad)?;
                let e = e.parse().map_err(|_| bad())?;
                let m = m.parse().map_err(|_| bad())?;
                Self::new(e, m, true)
            }
        }
    }
}

impl Serialize for FloatFormat {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for FloatFormat {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoundingMode {
    /// Inputs and constants rounded once; arithmetic in `f64`.
    StorageOnly,
    /// Every intermediate result rounded.
    #[default]
    PerOperation,
}

impl RoundingMode {
    pub fn name(self) -> &'static str {
        match self {
            RoundingMode::StorageOnly => "storage-only",
            RoundingMode::PerOperation => "per-operation",
        }
    }
}

impl FromStr for RoundingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "storage-only" | "storage" => Ok(Self::StorageOnly),
            "per-operation" | "per-op" => Ok(Self::PerOperation),
            _ => Err(Error::Domain(format!("unknown rounding mode `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RoundingFlags {
    pub overflow: bool,
    pub underflow: bool,
}

fn pow2(e: i32) -> f64 {
    // exact for the exponent range used here (-1074..=1023)
    if e >= -1022 {
        f64::from_bits(((e + 1023) as u64) << 52)
    } else {
        f64::from_bits(1u64 << (e + 1074))
    }
}

/// Unbiased binary exponent of a finite non-zero value.
fn exponent_of(v: f64) -> i32 {
    let bits = v.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i32;
    if biased == 0 {
        // f64 subnormal
        let mantissa = bits & ((1 << 52) - 1);
        -1022 - (mantissa.leading_zeros() as i32 - 12) - 1
    } else {
        biased - 1023
    }
}

/// Nearest value of `fmt` to `v`, ties to even. Overflow yields ±∞.
pub fn round_to_format(v: f64, fmt: FloatFormat) -> f64 {
    round_to_format_flagged(v, fmt).0
}

pub fn round_to_format_flagged(v: f64, fmt: FloatFormat) -> (f64, RoundingFlags) {
    let mut flags = RoundingFlags::default();
    if fmt.is_f64() || !v.is_finite() || v == 0.0 {
        return (v, flags);
    }
    let e = exponent_of(v);
    let emin = fmt.min_exponent();
    if e < emin && !fmt.supports_subnormals {
        let min_normal = fmt.min_normal();
        let half = 0.5 * min_normal;
        let out = if v.abs() > half { min_normal.copysign(v) } else { 0.0f64.copysign(v) };
        flags.underflow = out != v;
        return (out, flags);
    }
    let quantum = pow2(e.max(emin) - fmt.significand_bits as i32);
    let out = (v / quantum).round_ties_even() * quantum;
    if out.abs() > fmt.max_finite() {
        flags.overflow = true;
        return (f64::INFINITY.copysign(v), flags);
    }
    if e < emin && out != v {
        flags.underflow = true;
    }
    (out, flags)
}

/// Unit roundoff `2^-(significand_bits + 1)`.
pub fn relative_roundoff(fmt: FloatFormat) -> f64 {
    pow2(-(fmt.significand_bits as i32 + 1))
}

/// Index of a value produced on a [`Plan`] tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Slot(u32);

impl Slot {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Op {
    Input(usize),
    Const(f64),
    Add(Slot, Slot),
    Sub(Slot, Slot),
    Mul(Slot, Slot),
    Div(Slot, Slot),
    Neg(Slot),
    Abs(Slot),
    Exp(Slot),
    Log(Slot),
    Log1p(Slot),
    Tanh(Slot),
    Cos(Slot),
    Sin(Slot),
    Atan2(Slot, Slot),
}

impl Op {
    pub fn name(self) -> &'static str {
        match self {
            Op::Input(_) => "input",
            Op::Const(_) => "const",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Neg(_) => "neg",
            Op::Abs(_) => "abs",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Log1p(_) => "log1p",
            Op::Tanh(_) => "tanh",
            Op::Cos(_) => "cos",
            Op::Sin(_) => "sin",
            Op::Atan2(..) => "atan2",
        }
    }
}

/// A fixed sequence of elementary operations with designated outputs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Plan {
    ops: Vec<Op>,
    outputs: Vec<Slot>,
    n_inputs: usize,
}

/// A complex value as a pair of real slots.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ComplexSlot {
    pub re: Slot,
    pub im: Slot,
}

impl Plan {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn ops(&self) -> &[Op] {
        &self.ops
    }

    pub fn outputs(&self) -> &[Slot] {
        &self.outputs
    }

    fn push(&mut self, op: Op) -> Slot {
        self.ops.push(op);
        Slot(self.ops.len() as u32 - 1)
    }

    pub fn input(&mut self, index: usize) -> Slot {
        self.n_inputs = self.n_inputs.max(index + 1);
        self.push(Op::Input(index))
    }

    pub fn constant(&mut self, c: f64) -> Slot {
        self.push(Op::Const(c))
    }

    pub fn add(&mut self, a: Slot, b: Slot) -> Slot {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Slot, b: Slot) -> Slot {
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Slot, b: Slot) -> Slot {
        self.push(Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Slot, b: Slot) -> Slot {
        self.push(Op::Div(a, b))
    }

    pub fn neg(&mut self, a: Slot) -> Slot {
        self.push(Op::Neg(a))
    }

    pub fn abs(&mut self, a: Slot) -> Slot {
        self.push(Op::Abs(a))
    }

    pub fn exp(&mut self, a: Slot) -> Slot {
        self.push(Op::Exp(a))
    }

    pub fn log(&mut self, a: Slot) -> Slot {
        self.push(Op::Log(a))
    }

    pub fn log1p(&mut self, a: Slot) -> Slot {
        self.push(Op::Log1p(a))
    }

    pub fn tanh(&mut self, a: Slot) -> Slot {
        self.push(Op::Tanh(a))
    }

    pub fn cos(&mut self, a: Slot) -> Slot {
        self.push(Op::Cos(a))
    }

    pub fn sin(&mut self, a: Slot) -> Slot {
        self.push(Op::Sin(a))
    }

    pub fn atan2(&mut self, y: Slot, x: Slot) -> Slot {
        self.push(Op::Atan2(y, x))
    }

    pub fn output(&mut self, s: Slot) {
        self.outputs.push(s);
    }

    pub fn complex_input(&mut self, re: usize, im: usize) -> ComplexSlot {
        ComplexSlot { re: self.input(re), im: self.input(im) }
    }

    pub fn cadd(&mut self, a: ComplexSlot, b: ComplexSlot) -> ComplexSlot {
        ComplexSlot { re: self.add(a.re, b.re), im: self.add(a.im, b.im) }
    }

    /// Complex times real.
    pub fn cscale(&mut self, a: ComplexSlot, r: Slot) -> ComplexSlot {
        ComplexSlot { re: self.mul(a.re, r), im: self.mul(a.im, r) }
    }

    /// `log cosh(u + iv)` on the principal branch, written so that no
    /// intermediate overflows for large `|u|`:
    /// `re = |u| - ln 2 + log1p(2 e^{-2|u|} cos 2v + e^{-4|u|}) / 2`,
    /// `im = atan2(tanh(u) sin v, cos v)`.
    pub fn clog_cosh(&mut self, z: ComplexSlot) -> ComplexSlot {
        let au = self.abs(z.re);
        let m2 = self.constant(-2.0);
        let two = self.constant(2.0);
        let half = self.constant(0.5);
        let ln2 = self.constant(std::f64::consts::LN_2);
        let t = self.mul(m2, au);
        let e = self.exp(t);
        let v2 = self.mul(two, z.im);
        let c2v = self.cos(v2);
        let ec = self.mul(e, c2v);
        let two_ec = self.mul(two, ec);
        let ee = self.mul(e, e);
        let arg = self.add(two_ec, ee);
        let l = self.log1p(arg);
        let hl = self.mul(half, l);
        let shifted = self.sub(au, ln2);
        let re = self.add(shifted, hl);
        let th = self.tanh(z.re);
        let sv = self.sin(z.im);
        let cv = self.cos(z.im);
        let y = self.mul(th, sv);
        let im = self.atan2(y, cv);
        ComplexSlot { re, im }
    }
}

/// Evaluates `plan` with no rounding at all.
pub fn evaluate_exact(plan: &Plan, inputs: &[f64]) -> Result<Vec<f64>> {
    evaluate_rounded(plan, inputs, FloatFormat::F64, RoundingMode::PerOperation)
}

/// Replays `plan` under `fmt`.
///
/// In per-operation mode every intermediate is rounded; in storage-only mode
/// only inputs and constants are. A NaN anywhere aborts with the index of the
/// operation that produced it.
pub fn evaluate_rounded(
    plan: &Plan,
    inputs: &[f64],
    fmt: FloatFormat,
    mode: RoundingMode,
) -> Result<Vec<f64>> {
    let mut scratch = Vec::with_capacity(plan.ops.len());
    evaluate_into(plan, inputs, fmt, mode, &mut scratch)?;
    Ok(plan.outputs.iter().map(|s| scratch[s.0 as usize]).collect())
}

pub(crate) fn evaluate_into(
    plan: &Plan,
    inputs: &[f64],
    fmt: FloatFormat,
    mode: RoundingMode,
    values: &mut Vec<f64>,
) -> Result<()> {
    if inputs.len() < plan.n_inputs {
        return Err(Error::SizeMismatch { expected: plan.n_inputs, found: inputs.len() });
    }
    let identity = fmt.is_f64();
    let per_op = mode == RoundingMode::PerOperation && !identity;
    let store = |v: f64| if identity { v } else { round_to_format(v, fmt) };
    values.clear();
    for (index, &op) in plan.ops.iter().enumerate() {
        let g = |s: Slot| values[s.0 as usize];
        let raw = match op {
            Op::Input(i) => store(inputs[i]),
            Op::Const(c) => store(c),
            Op::Add(a, b) => g(a) + g(b),
            Op::Sub(a, b) => g(a) - g(b),
            Op::Mul(a, b) => g(a) * g(b),
            Op::Div(a, b) => g(a) / g(b),
            Op::Neg(a) => -g(a),
            Op::Abs(a) => g(a).abs(),
            Op::Exp(a) => g(a).exp(),
            Op::Log(a) => g(a).ln(),
            Op::Log1p(a) => g(a).ln_1p(),
            Op::Tanh(a) => g(a).tanh(),
            Op::Cos(a) => g(a).cos(),
            Op::Sin(a) => g(a).sin(),
            Op::Atan2(y, x) => g(y).atan2(g(x)),
        };
        let v = match op {
            Op::Input(_) | Op::Const(_) => raw,
            _ if per_op => round_to_format(raw, fmt),
            _ => raw,
        };
        if v.is_nan() {
            return Err(Error::EvaluationFailure { op_index: index, op: op.name() });
        }
        values.push(v);
    }
    Ok(())
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_formats_match_table() {
        for (f, e, m) in [
            (FloatFormat::BF16, 8, 7),
            (FloatFormat::F16, 5, 10),
            (FloatFormat::F32, 8, 23),
            (FloatFormat::F64, 11, 52),
        ] {
            assert_eq!((f.exponent_bits(), f.significand_bits()), (e, m));
            assert_eq!(f.name().parse::<FloatFormat>().unwrap(), f);
        }
        assert_eq!("e4m3".parse::<FloatFormat>().unwrap().significand_bits(), 3);
        assert!("f8".parse::<FloatFormat>().is_err());
        assert_eq!(FloatFormat::F16.max_finite(), 65504.0);
        assert_eq!(FloatFormat::F16.min_normal(), 2f64.powi(-14));
        assert_eq!(FloatFormat::F16.min_subnormal(), 2f64.powi(-24));
    }

    #[test]
    fn relative_roundoff_values() {
        let close = |a: f64, b: f64| ((a - b) / b).abs() < 5e-3;
        assert!(close(relative_roundoff(FloatFormat::F32), 5.96e-8));
        assert!(close(relative_roundoff(FloatFormat::F64), 1.11e-16));
        assert!(close(relative_roundoff(FloatFormat::BF16), 3.91e-3));
        assert_eq!(relative_roundoff(FloatFormat::F16), 2f64.powi(-11));
    }

    #[test]
    fn rounding_examples() {
        assert_eq!(round_to_format(1.0, FloatFormat::F16), 1.0);
        assert_eq!(round_to_format(1.0 + 2f64.powi(-12), FloatFormat::F16), 1.0);
        // exact tie above 1.0 goes to even (1.0)
        assert_eq!(round_to_format(1.0 + 2f64.powi(-11), FloatFormat::F16), 1.0);
        assert_eq!(round_to_format(1.0 + 3.0 * 2f64.powi(-11), FloatFormat::F16), 1.0 + 2f64.powi(-9));
        assert_eq!(round_to_format(0.1, FloatFormat::BF16), 0.10009765625);
        let (v, flags) = round_to_format_flagged(70000.0, FloatFormat::F16);
        assert_eq!(v, f64::INFINITY);
        assert!(flags.overflow);
        let (v, flags) = round_to_format_flagged(-70000.0, FloatFormat::F16);
        assert_eq!(v, f64::NEG_INFINITY);
        assert!(flags.overflow);
        assert_eq!(round_to_format(65519.0, FloatFormat::F16), 65504.0);
        assert_eq!(round_to_format(65520.0, FloatFormat::F16), f64::INFINITY);
        assert_eq!(round_to_format(f64::NEG_INFINITY, FloatFormat::BF16), f64::NEG_INFINITY);
        assert!(round_to_format(f64::NAN, FloatFormat::F16).is_nan());
    }

    #[test]
    fn subnormal_handling() {
        let tiny = FloatFormat::F16.min_subnormal();
        assert_eq!(round_to_format(tiny * 0.75, FloatFormat::F16), tiny);
        assert_eq!(round_to_format(tiny * 0.5, FloatFormat::F16), 0.0);
        assert_eq!(round_to_format(tiny * 1.5, FloatFormat::F16), 2.0 * tiny);
        let ftz = FloatFormat::new(5, 10, false).unwrap();
        let min = ftz.min_normal();
        assert_eq!(round_to_format(min * 0.4, ftz), 0.0);
        assert_eq!(round_to_format(min * 0.6, ftz), min);
        assert_eq!(round_to_format(-min * 0.6, ftz), -min);
    }

    #[test]
    fn single_multiply_in_bf16() {
        let mut plan = Plan::new();
        let a = plan.input(0);
        let b = plan.input(1);
        let p = plan.mul(a, b);
        plan.output(p);
        let fmt = FloatFormat::BF16;
        let got = evaluate_rounded(&plan, &[3.0, 1.0 / 3.0], fmt, RoundingMode::PerOperation).unwrap();
        let expected = round_to_format(round_to_format(3.0, fmt) * round_to_format(1.0 / 3.0, fmt), fmt);
        assert_eq!(got, vec![expected]);
        let storage = evaluate_rounded(&plan, &[3.0, 1.0 / 3.0], fmt, RoundingMode::StorageOnly).unwrap();
        assert_eq!(storage, vec![round_to_format(3.0, fmt) * round_to_format(1.0 / 3.0, fmt)]);
    }

    #[test]
    fn nan_reports_operation_index() {
        let mut plan = Plan::new();
        let a = plan.input(0);
        let l = plan.log(a);
        plan.output(l);
        let err = evaluate_rounded(&plan, &[-1.0], FloatFormat::F32, RoundingMode::PerOperation).unwrap_err();
        assert!(matches!(err, Error::EvaluationFailure { op_index: 1, op: "log" }));
    }

    #[test]
    fn f64_is_bitwise_reference() {
        let mut plan = Plan::new();
        let z = plan.complex_input(0, 1);
        let lc = plan.clog_cosh(z);
        plan.output(lc.re);
        plan.output(lc.im);
        let inputs = [0.3712, -1.234];
        let exact = evaluate_exact(&plan, &inputs).unwrap();
        for mode in [RoundingMode::PerOperation, RoundingMode::StorageOnly] {
            let got = evaluate_rounded(&plan, &inputs, FloatFormat::F64, mode).unwrap();
            assert_eq!(got[0].to_bits(), exact[0].to_bits());
            assert_eq!(got[1].to_bits(), exact[1].to_bits());
        }
        let reference = num_complex::Complex64::new(inputs[0], inputs[1]).cosh().ln();
        assert!((exact[0] - reference.re).abs() < 1e-15);
        assert!((exact[1] - reference.im).abs() < 1e-15);
    }
}
