pub mod agent;
pub mod baselines;
pub mod config;
pub mod corpus;
pub mod digest;
pub mod eval;
pub mod llm;
pub mod retrieval;
pub mod service;
pub mod simenv;
pub mod table;
pub mod text;
pub mod tools;
