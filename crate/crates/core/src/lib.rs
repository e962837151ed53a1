pub mod analysis;
pub mod ast;
pub mod corpus;
pub mod difficulty;
pub mod embedding;
pub mod executor;
pub mod harness;
pub mod lexer;
pub mod metrics;
pub mod parser;
pub mod tree;
