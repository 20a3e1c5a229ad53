//! Two-stage curation of vulnerability datasets from security patches.
//!
//! Stage one ([`classify`]) decides which file-level patches are security
//! fixes and gates CVEs on a confidence threshold. Stage two ([`agentloop`])
//! traces each kept CVE's root cause over a [`codeindex`] of the pre-patch
//! snapshot, collecting context until the evidence chain is complete or the
//! iteration cap marks the CVE undecidable. [`datasetout`] consolidates both
//! stages into a CVE-indexed dataset, and [`evalharness`] runs paired
//! detection experiments over it. All model traffic goes through
//! [`llmgateway`], which can record and replay it deterministically.

pub mod agentloop;
pub mod classify;
pub mod codeindex;
pub mod datasetout;
pub mod evalharness;
pub mod ingest;
pub mod llmgateway;
pub mod util;
