//! Fuel-bounded big-step interpreter.
//!
//! Evaluation is call-by-value, left to right. The machine keeps its
//! continuation on the heap, so deep recursion in the object language does
//! not grow the Rust stack. Each primitive application and each unfolding
//! of a recursive function costs one unit of fuel; running out of fuel is
//! reported as a distinct kind of bottom.
//!
//! The same machine runs probabilistic programs against a trace (see
//! [`crate::prob`]). Weights are combined following the bind of the
//! weighted-sampler monad: at every sequencing point the weight of the
//! prefix multiplies the weight of the continuation, so `let`-composition
//! is multiplicative bit for bit.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::prims::{self, DomainError, Dual, DualScalar, Prim, Scalar};
use crate::syntax::{free_vars, Name, Term, TermRef};

pub const DEFAULT_FUEL: u64 = 1_000_000;

#[derive(Clone, Debug)]
pub enum Value {
    Real(f64),
    Bool(bool),
    Unit,
    Pair(Arc<Value>, Arc<Value>),
    Closure(Arc<Closure>),
    RecClosure(Arc<RecClosure>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Closure {
    pub env: Env,
    pub param: Name,
    pub body: TermRef,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecClosure {
    pub env: Env,
    pub fun: Name,
    pub param: Name,
    pub body: TermRef,
}

/// Reals compare bitwise, so `NaN == NaN` and `0.0 != -0.0`.
impl PartialEq for Value {
    fn eq(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Real(a), Value::Real(b)) => a.to_bits() == b.to_bits(),
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Unit, Value::Unit) => true,
            (Value::Pair(a, b), Value::Pair(c, d)) => a == c && b == d,
            (Value::Closure(a), Value::Closure(b)) => Arc::ptr_eq(a, b) || a == b,
            (Value::RecClosure(a), Value::RecClosure(b)) => Arc::ptr_eq(a, b) || a == b,
            _ => false,
        }
    }
}

impl Value {
    pub fn pair(a: Value, b: Value) -> Value {
        Value::Pair(Arc::new(a), Arc::new(b))
    }

    pub fn dual(d: Dual) -> Value {
        Value::pair(Value::Real(d.primal), Value::Real(d.tangent))
    }

    pub fn as_real(&self) -> Option<f64> {
        match self {
            Value::Real(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_dual(&self) -> Option<Dual> {
        match self {
            Value::Pair(a, b) => Some(Dual::new(a.as_real()?, b.as_real()?)),
            _ => None,
        }
    }

    /// Flattens a value built from reals and pairs, left to right.
    pub fn reals(&self) -> Option<Vec<f64>> {
        fn go(v: &Value, out: &mut Vec<f64>) -> bool {
            match v {
                Value::Real(x) => {
                    out.push(*x);
                    true
                }
                Value::Pair(a, b) => go(a, out) && go(b, out),
                _ => false,
            }
        }
        let mut out = Vec::new();
        go(self, &mut out).then_some(out)
    }

    pub fn is_function(&self) -> bool {
        matches!(self, Value::Closure(_) | Value::RecClosure(_))
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Real(x) => f.write_str(&crate::syntax::real_literal(*x)),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Unit => f.write_str("()"),
            Value::Pair(a, b) => write!(f, "({a}, {b})"),
            Value::Closure(c) => write!(f, "<fun {}>", c.param),
            Value::RecClosure(c) => write!(f, "<mu {}>", c.fun),
        }
    }
}

/// Persistent environment: an immutable linked list of bindings.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Env(Option<Arc<EnvNode>>);

#[derive(Debug, PartialEq)]
struct EnvNode {
    name: Name,
    value: Value,
    next: Env,
}

impl Env {
    pub fn new() -> Env {
        Env(None)
    }

    pub fn extend(&self, name: Name, value: Value) -> Env {
        Env(Some(Arc::new(EnvNode {
            name,
            value,
            next: self.clone(),
        })))
    }

    pub fn lookup(&self, name: &str) -> Option<&Value> {
        let mut cur = &self.0;
        while let Some(node) = cur {
            if &*node.name == name {
                return Some(&node.value);
            }
            cur = &node.next.0;
        }
        None
    }

    pub fn names(&self) -> Vec<Name> {
        let mut out = Vec::new();
        let mut cur = &self.0;
        while let Some(node) = cur {
            out.push(node.name.clone());
            cur = &node.next.0;
        }
        out
    }

    /// Keeps only the innermost binding of each name in `keep`.
    fn restrict(&self, keep: &BTreeSet<Name>) -> Env {
        let mut picked: Vec<(Name, Value)> = Vec::new();
        let mut cur = &self.0;
        while let Some(node) = cur {
            if keep.contains(&node.name) && !picked.iter().any(|(n, _)| *n == node.name) {
                picked.push((node.name.clone(), node.value.clone()));
            }
            cur = &node.next.0;
        }
        picked
            .into_iter()
            .rev()
            .fold(Env::new(), |env, (n, v)| env.extend(n, v))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BottomReason {
    Domain { prim: &'static str },
    FuelExhausted,
}

impl fmt::Display for BottomReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BottomReason::Domain { prim } => write!(f, "domain error in {prim}"),
            BottomReason::FuelExhausted => f.write_str("fuel exhausted"),
        }
    }
}

impl From<DomainError> for BottomReason {
    fn from(e: DomainError) -> Self {
        BottomReason::Domain { prim: e.prim }
    }
}

/// Result of a (possibly derived) computation: a value or semantic bottom.
#[derive(Clone, Debug, PartialEq)]
pub enum Outcome<T = Value> {
    Val(T),
    Bottom(BottomReason),
}

impl<T> Outcome<T> {
    pub fn is_val(&self) -> bool {
        matches!(self, Outcome::Val(_))
    }

    pub fn val(self) -> Option<T> {
        match self {
            Outcome::Val(v) => Some(v),
            Outcome::Bottom(_) => None,
        }
    }

    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> Outcome<U> {
        match self {
            Outcome::Val(v) => Outcome::Val(f(v)),
            Outcome::Bottom(r) => Outcome::Bottom(r),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluated {
    pub outcome: Outcome,
    pub steps: u64,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum EvalError {
    #[error("term uses sample/score; run it with the probabilistic runtime")]
    NotDeterministic,
    #[error("unbound variable `{0}` at runtime")]
    Unbound(String),
    #[error("evaluation stuck: {0}")]
    Stuck(String),
    #[error("fuel must be positive")]
    NoFuel,
}

/// Source of random draws for `sample`. `None` means the trace is exhausted.
pub(crate) trait Randomness {
    fn draw(&mut self) -> Option<Dual>;
}

/// How a machine run ended.
#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Halt {
    Value(Value),
    Bottom(BottomReason),
    Incomplete,
}

enum Frame {
    PrimArg {
        prim: Prim,
        node: TermRef,
        done: Vec<Value>,
        env: Env,
    },
    PairRight {
        right: TermRef,
        env: Env,
    },
    PairDone {
        left: Value,
    },
    Match {
        left: Name,
        right: Name,
        body: TermRef,
        env: Env,
    },
    If {
        then_: TermRef,
        else_: TermRef,
        env: Env,
    },
    AppArg {
        arg: TermRef,
        env: Env,
    },
    AppCall {
        fun: Value,
    },
    LetBody {
        name: Name,
        body: TermRef,
        env: Env,
    },
    Score {
        dual: bool,
    },
    /// Weight of an already-finished prefix; multiplies the continuation's.
    Weight(Dual),
}

enum State {
    Eval(TermRef, Env),
    Return(Value),
}

pub(crate) struct Machine<'r> {
    fuel: u64,
    pub(crate) steps: u64,
    randomness: Option<&'r mut dyn Randomness>,
    pub(crate) weight: Dual,
    pub(crate) consumed: usize,
}

/// Product with the measure-theoretic convention `0 * inf = 0`.
pub(crate) fn weight_mul(a: Dual, b: Dual) -> Dual {
    let primal = if a.primal == 0.0 || b.primal == 0.0 {
        0.0
    } else {
        a.primal * b.primal
    };
    Dual::new(primal, a.tangent * b.primal + a.primal * b.tangent)
}

/// `0 ∨ w`: the positive piece when `w > 0`, else the constant zero piece.
fn clamp_weight(w: Dual) -> Dual {
    if w.primal > 0.0 {
        w
    } else {
        Dual::new(0.0, 0.0)
    }
}

impl<'r> Machine<'r> {
    pub(crate) fn deterministic(fuel: u64) -> Machine<'static> {
        Machine {
            fuel,
            steps: 0,
            randomness: None,
            weight: Dual::ONE,
            consumed: 0,
        }
    }

    pub(crate) fn with_randomness(fuel: u64, randomness: &'r mut dyn Randomness) -> Machine<'r> {
        Machine {
            fuel,
            steps: 0,
            randomness: Some(randomness),
            weight: Dual::ONE,
            consumed: 0,
        }
    }

    fn tick(&mut self) -> Result<(), BottomReason> {
        if self.fuel == 0 {
            return Err(BottomReason::FuelExhausted);
        }
        self.fuel -= 1;
        self.steps += 1;
        Ok(())
    }

    fn tracks_weight(&self) -> bool {
        self.randomness.is_some()
    }

    /// Closes off the current prefix at a sequencing point.
    fn bind_point(&mut self, stack: &mut Vec<Frame>) {
        if self.tracks_weight() && self.weight != Dual::ONE {
            stack.push(Frame::Weight(self.weight));
            self.weight = Dual::ONE;
        }
    }

    pub(crate) fn run(&mut self, term: TermRef, env: Env) -> Result<Halt, EvalError> {
        self.drive(State::Eval(term, env), Vec::new())
    }

    /// Applies a function value to an argument value.
    pub(crate) fn apply(&mut self, fun: Value, arg: Value) -> Result<Halt, EvalError> {
        let mut stack = Vec::new();
        match self.call(fun, arg, &mut stack)? {
            Ok(state) => self.drive(state, stack),
            Err(reason) => Ok(Halt::Bottom(reason)),
        }
    }

    fn call(
        &mut self,
        fun: Value,
        arg: Value,
        _stack: &mut [Frame],
    ) -> Result<Result<State, BottomReason>, EvalError> {
        match fun {
            Value::Closure(c) => {
                let env = c.env.extend(c.param.clone(), arg);
                Ok(Ok(State::Eval(c.body.clone(), env)))
            }
            Value::RecClosure(c) => {
                if let Err(reason) = self.tick() {
                    return Ok(Err(reason));
                }
                let env = c
                    .env
                    .extend(c.fun.clone(), Value::RecClosure(c.clone()))
                    .extend(c.param.clone(), arg);
                Ok(Ok(State::Eval(c.body.clone(), env)))
            }
            other => Err(EvalError::Stuck(format!("applying non-function {other}"))),
        }
    }

    fn apply_prim(
        &mut self,
        prim: Prim,
        args: &[Value],
    ) -> Result<Result<Value, BottomReason>, EvalError> {
        if let Err(reason) = self.tick() {
            return Ok(Err(reason));
        }
        let spec = prim.spec();
        if prim.dual {
            let duals = args
                .iter()
                .map(|a| {
                    a.as_dual().ok_or_else(|| {
                        EvalError::Stuck(format!("{prim} expects dual numbers, got {a}"))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(match prims::dual_prim(spec, &duals) {
                Ok(DualScalar::Dual(d)) => Ok(Value::dual(d)),
                Ok(DualScalar::Bool(b)) => Ok(Value::Bool(b)),
                Err(e) => Err(e.into()),
            })
        } else {
            let reals = args
                .iter()
                .map(|a| {
                    a.as_real()
                        .ok_or_else(|| EvalError::Stuck(format!("{prim} expects reals, got {a}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(match prims::eval_prim(spec, &reals) {
                Ok(Scalar::Real(x)) => Ok(Value::Real(x)),
                Ok(Scalar::Bool(b)) => Ok(Value::Bool(b)),
                Err(e) => Err(e.into()),
            })
        }
    }

    fn make_closure(env: &Env, term: &Term) -> Value {
        match term {
            Term::Lam { param, body, .. } => {
                let mut fv = free_vars(body);
                fv.remove(param);
                Value::Closure(Arc::new(Closure {
                    env: env.restrict(&fv),
                    param: param.clone(),
                    body: body.clone(),
                }))
            }
            Term::Mu {
                fun, param, body, ..
            } => {
                let mut fv = free_vars(body);
                fv.remove(fun);
                fv.remove(param);
                Value::RecClosure(Arc::new(RecClosure {
                    env: env.restrict(&fv),
                    fun: fun.clone(),
                    param: param.clone(),
                    body: body.clone(),
                }))
            }
            _ => unreachable!("make_closure on a non-abstraction"),
        }
    }

    fn drive(&mut self, mut state: State, mut stack: Vec<Frame>) -> Result<Halt, EvalError> {
        loop {
            state = match state {
                State::Eval(term, env) => match &*term {
                    Term::Var(x) => match env.lookup(x) {
                        Some(v) => State::Return(v.clone()),
                        None => return Err(EvalError::Unbound(x.to_string())),
                    },
                    Term::Real(x) => State::Return(Value::Real(*x)),
                    Term::Bool(b) => State::Return(Value::Bool(*b)),
                    Term::Unit => State::Return(Value::Unit),
                    Term::Lam { .. } | Term::Mu { .. } => {
                        State::Return(Self::make_closure(&env, &term))
                    }
                    Term::Prim(prim, args) => {
                        if args.is_empty() {
                            match self.apply_prim(*prim, &[])? {
                                Ok(v) => State::Return(v),
                                Err(r) => return Ok(Halt::Bottom(r)),
                            }
                        } else {
                            let first = args[0].clone();
                            stack.push(Frame::PrimArg {
                                prim: *prim,
                                node: term.clone(),
                                done: Vec::with_capacity(args.len()),
                                env: env.clone(),
                            });
                            State::Eval(first, env)
                        }
                    }
                    Term::Pair(a, b) => {
                        stack.push(Frame::PairRight {
                            right: b.clone(),
                            env: env.clone(),
                        });
                        State::Eval(a.clone(), env)
                    }
                    Term::Match {
                        scrutinee,
                        left,
                        right,
                        body,
                    } => {
                        stack.push(Frame::Match {
                            left: left.clone(),
                            right: right.clone(),
                            body: body.clone(),
                            env: env.clone(),
                        });
                        State::Eval(scrutinee.clone(), env)
                    }
                    Term::If(c, a, b) => {
                        stack.push(Frame::If {
                            then_: a.clone(),
                            else_: b.clone(),
                            env: env.clone(),
                        });
                        State::Eval(c.clone(), env)
                    }
                    Term::App(f, a) => {
                        stack.push(Frame::AppArg {
                            arg: a.clone(),
                            env: env.clone(),
                        });
                        State::Eval(f.clone(), env)
                    }
                    Term::Let {
                        name, bound, body, ..
                    } => {
                        stack.push(Frame::LetBody {
                            name: name.clone(),
                            body: body.clone(),
                            env: env.clone(),
                        });
                        State::Eval(bound.clone(), env)
                    }
                    Term::Sample | Term::DualSample => {
                        let dual = matches!(&*term, Term::DualSample);
                        let Some(source) = self.randomness.as_mut() else {
                            return Err(EvalError::NotDeterministic);
                        };
                        match source.draw() {
                            Some(d) => {
                                self.consumed += 1;
                                State::Return(if dual {
                                    Value::dual(d)
                                } else {
                                    Value::Real(d.primal)
                                })
                            }
                            None => return Ok(Halt::Incomplete),
                        }
                    }
                    Term::Score(a) | Term::DualScore(a) => {
                        if !self.tracks_weight() {
                            return Err(EvalError::NotDeterministic);
                        }
                        stack.push(Frame::Score {
                            dual: matches!(&*term, Term::DualScore(_)),
                        });
                        State::Eval(a.clone(), env)
                    }
                },
                State::Return(value) => {
                    let Some(frame) = stack.pop() else {
                        return Ok(Halt::Value(value));
                    };
                    match frame {
                        Frame::PrimArg {
                            prim,
                            node,
                            mut done,
                            env,
                        } => {
                            done.push(value);
                            let Term::Prim(_, args) = &*node else {
                                unreachable!("PrimArg frame holds a Prim node")
                            };
                            if done.len() == args.len() {
                                match self.apply_prim(prim, &done)? {
                                    Ok(v) => State::Return(v),
                                    Err(r) => return Ok(Halt::Bottom(r)),
                                }
                            } else {
                                self.bind_point(&mut stack);
                                let next = args[done.len()].clone();
                                stack.push(Frame::PrimArg {
                                    prim,
                                    node: node.clone(),
                                    done,
                                    env: env.clone(),
                                });
                                State::Eval(next, env)
                            }
                        }
                        Frame::PairRight { right, env } => {
                            self.bind_point(&mut stack);
                            stack.push(Frame::PairDone { left: value });
                            State::Eval(right, env)
                        }
                        Frame::PairDone { left } => State::Return(Value::pair(left, value)),
                        Frame::Match {
                            left,
                            right,
                            body,
                            env,
                        } => match value {
                            Value::Pair(a, b) => {
                                self.bind_point(&mut stack);
                                let env =
                                    env.extend(left, (*a).clone()).extend(right, (*b).clone());
                                State::Eval(body, env)
                            }
                            other => {
                                return Err(EvalError::Stuck(format!("match on non-pair {other}")))
                            }
                        },
                        Frame::If { then_, else_, env } => match value {
                            Value::Bool(b) => {
                                self.bind_point(&mut stack);
                                State::Eval(if b { then_ } else { else_ }, env)
                            }
                            other => {
                                return Err(EvalError::Stuck(format!("if on non-boolean {other}")))
                            }
                        },
                        Frame::AppArg { arg, env } => {
                            self.bind_point(&mut stack);
                            stack.push(Frame::AppCall { fun: value });
                            State::Eval(arg, env)
                        }
                        Frame::AppCall { fun } => {
                            self.bind_point(&mut stack);
                            match self.call(fun, value, &mut stack)? {
                                Ok(s) => s,
                                Err(r) => return Ok(Halt::Bottom(r)),
                            }
                        }
                        Frame::LetBody { name, body, env } => {
                            self.bind_point(&mut stack);
                            State::Eval(body, env.extend(name, value))
                        }
                        Frame::Score { dual } => {
                            let w =
                                if dual {
                                    value.as_dual().ok_or_else(|| {
                                        EvalError::Stuck(format!("dual_score of {value}"))
                                    })?
                                } else {
                                    Dual::constant(value.as_real().ok_or_else(|| {
                                        EvalError::Stuck(format!("score of {value}"))
                                    })?)
                                };
                            self.weight = weight_mul(self.weight, clamp_weight(w));
                            State::Return(Value::Unit)
                        }
                        Frame::Weight(prefix) => {
                            self.weight = weight_mul(prefix, self.weight);
                            State::Return(value)
                        }
                    }
                }
            }
        }
    }
}

/// Deterministic evaluation of `t` in `env`.
pub fn eval(t: &Term, env: &Env, fuel: u64) -> Result<Evaluated, EvalError> {
    if fuel == 0 {
        return Err(EvalError::NoFuel);
    }
    let mut m = Machine::deterministic(fuel);
    let halt = m.run(Arc::new(t.clone()), env.clone())?;
    Ok(Evaluated {
        outcome: halt_to_outcome(halt)?,
        steps: m.steps,
    })
}

/// Evaluates a closed deterministic term in the empty environment.
pub fn eval_closed(t: &Term, fuel: u64) -> Result<Evaluated, EvalError> {
    if !t.is_deterministic() {
        return Err(EvalError::NotDeterministic);
    }
    eval(t, &Env::new(), fuel)
}

/// Applies a function value to arguments one at a time (curried).
pub fn apply(fun: &Value, args: &[Value], fuel: u64) -> Result<Evaluated, EvalError> {
    if fuel == 0 {
        return Err(EvalError::NoFuel);
    }
    let mut m = Machine::deterministic(fuel);
    let mut cur = fun.clone();
    for a in args {
        match m.apply(cur, a.clone())? {
            Halt::Value(v) => cur = v,
            Halt::Bottom(r) => {
                return Ok(Evaluated {
                    outcome: Outcome::Bottom(r),
                    steps: m.steps,
                })
            }
            Halt::Incomplete => return Err(EvalError::NotDeterministic),
        }
    }
    Ok(Evaluated {
        outcome: Outcome::Val(cur),
        steps: m.steps,
    })
}

fn halt_to_outcome(h: Halt) -> Result<Outcome, EvalError> {
    match h {
        Halt::Value(v) => Ok(Outcome::Val(v)),
        Halt::Bottom(r) => Ok(Outcome::Bottom(r)),
        Halt::Incomplete => Err(EvalError::NotDeterministic),
    }
}
