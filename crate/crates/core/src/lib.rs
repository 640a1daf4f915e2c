pub mod ad;
pub mod corpus;
pub mod eval;
pub mod exec;
pub mod gd;
pub mod gen;
pub mod numcheck;
pub mod parser;
pub mod prims;
pub mod prob;
pub mod rng;
pub mod syntax;
pub mod typecheck;
