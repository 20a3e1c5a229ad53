pub mod oracle_check;
pub mod text_oracle;
