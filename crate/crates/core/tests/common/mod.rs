pub mod ml_oracle;
pub mod poly;
