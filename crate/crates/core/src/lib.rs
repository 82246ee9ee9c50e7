pub mod analysis;
pub mod class;
pub mod crp;
pub mod error;
pub mod experiment;
pub mod hypothesis;
pub mod learner;
pub mod lp;
pub mod oracle;
pub mod query;
