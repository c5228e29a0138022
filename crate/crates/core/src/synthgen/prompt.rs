use super::Demonstration;
use crate::corpus::{Provision, Revision};
use crate::error::{Error, Result};

pub fn build_synthetic_prompt(demos: &[Demonstration], query: &Provision) -> Result<String> {
    if demos.is_empty() {
        return Err(Error::InvalidInput("synthetic prompt needs at least one demonstration".into()));
    }
    let mut out = String::from(
        "Use the following pairs of provisions and fallback revisions to understand what constitutes an \
         acceptable and unacceptable revision. Then provide revisions for the given query provision.\n\n",
    );
    for (i, d) in demos.iter().enumerate() {
        out.push_str(&format!(
            "Demonstration {}\nProvision: {}\nAcceptable revision: {}\nUnacceptable revision: {}\n\n",
            i + 1,
            d.provision.trim(),
            d.acceptable.trim(),
            d.unacceptable.trim()
        ));
    }
    let query_text = query.template_text.as_deref().unwrap_or(&query.text);
    out.push_str(&format!("Query Provision: {}", query_text.trim()));
    Ok(out)
}

pub fn build_rephrase_prompt(revision: &Revision) -> String {
    format!(
        "Rephrase the following contract clause revision so that it is semantically identical but expressed \
         using different wording. Do not change the meaning, intent, or legal interpretation of the revision. \
         Ensure the rephrasing retains the same level of formality and contractual tone.\n\n\
         Original Revision: {}\n\nRephrased Revision:",
        revision.text.trim()
    )
}
