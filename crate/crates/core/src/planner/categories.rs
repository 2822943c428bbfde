use super::{DialectAwarePlan, LogicalPlan, MacroOperator, PlanError, StandardizedOperator};
use crate::kb::CanonicalReference;
use crate::llm::{bindings, Prompter};
use crate::model::Dialect;

/// Category assigned when the model keeps naming labels outside the
/// canonical reference.
pub const AUX_CATEGORY: &str = "Auxiliary";
pub const CATEGORY_RETRIES: usize = 2;

fn category_listing(csr: &CanonicalReference) -> String {
    csr.categories
        .iter()
        .map(|c| {
            let points: Vec<&str> = c.atomic_points.iter().map(|p| p.name.as_str()).collect();
            format!("- {}: {}", c.name, points.join(", "))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// `Category | description` on the first non-empty line.
fn parse_reply<'a>(reply: &'a str, csr: &CanonicalReference) -> Result<(String, &'a str), String> {
    let line = reply.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    let (cat, desc) = line.split_once('|').ok_or_else(|| line.to_string())?;
    let desc = desc.trim();
    match csr.category(cat) {
        Some(c) if !desc.is_empty() => Ok((c.name.clone(), desc)),
        _ => Err(cat.trim().to_string()),
    }
}

fn map_one(
    op: &MacroOperator,
    csr: &CanonicalReference,
    listing: &str,
    llm: &Prompter<'_>,
) -> Result<StandardizedOperator, PlanError> {
    let types: Vec<String> = op.refs.iter().map(|r| r.to_string()).collect();
    let mut note = String::new();
    for attempt in 0..=CATEGORY_RETRIES {
        let reply = llm.ask(
            "map_category",
            &bindings([
                ("categories", listing.to_string()),
                ("operator", op.render_line()),
                ("types", if types.is_empty() { "(none)".into() } else { types.join("; ") }),
                ("note", note.clone()),
            ]),
        )?;
        match parse_reply(&reply, csr) {
            Ok((category, desc)) => {
                return Ok(StandardizedOperator {
                    category,
                    standard_description: desc.to_string(),
                    source_index: op.order_index,
                })
            }
            Err(bad) => {
                tracing::info!(attempt, label = %bad, "category outside the reference");
                note = format!("The previous answer \"{bad}\" is not one of the listed categories.");
            }
        }
    }
    tracing::warn!(step = op.order_index + 1, "falling back to the auxiliary category");
    Ok(StandardizedOperator {
        category: AUX_CATEGORY.to_string(),
        standard_description: op.description.clone(),
        source_index: op.order_index,
    })
}

/// One standardized category per sensitive operator, in plan order.
pub fn map_functional_categories(
    plan: &LogicalPlan,
    csr: &CanonicalReference,
    llm: &Prompter<'_>,
    dialect: Dialect,
) -> Result<DialectAwarePlan, PlanError> {
    let listing = category_listing(csr);
    let enriched = plan
        .operators
        .iter()
        .filter(|op| op.sensitive)
        .map(|op| map_one(op, csr, &listing, llm))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DialectAwarePlan {
        base: plan.clone(),
        enriched,
        dialect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{StubBackend, StubRule, TemplateSet};
    use crate::planner::MacroOperatorKind;

    fn plan() -> LogicalPlan {
        let mut plan = LogicalPlan::new(vec![
            MacroOperator::new(MacroOperatorKind::Src, "read transactions", vec![]),
            MacroOperator::new(MacroOperatorKind::Cal, "strip symbols and commas, cast to numeric", vec![]),
            MacroOperator::new(MacroOperatorKind::Cal, "compute time difference in months", vec![]),
        ]);
        plan.operators[1].sensitive = true;
        plan.operators[2].sensitive = true;
        plan
    }

    #[test]
    fn each_sensitive_operator_gets_one_category() {
        let backend = StubBackend::new(vec![
            StubRule::new(
                "map_category",
                "cast to numeric",
                "String Manipulation | Slice string from index 3 to length-4, remove commas, cast to float",
            ),
            StubRule::new("map_category", "time difference", "[Date_and_Time_Operations] | months between two dates"),
        ]);
        let templates = TemplateSet::builtin();
        let csr = CanonicalReference::builtin();
        let out = map_functional_categories(&plan(), &csr, &Prompter::new(&backend, &templates), Dialect::Oracle).unwrap();
        assert_eq!(out.enriched.len(), 2);
        assert_eq!(out.enriched[0].category, "String Manipulation");
        assert_eq!(out.enriched[0].source_index, 1);
        assert_eq!(out.enriched[1].category, "Date & Time Operations");
    }

    #[test]
    fn unknown_label_falls_back_after_retries() {
        let backend = StubBackend::new(vec![StubRule::new("map_category", "", "String_Processing | slice")]);
        let templates = TemplateSet::builtin();
        let csr = CanonicalReference::builtin();
        let out = map_functional_categories(&plan(), &csr, &Prompter::new(&backend, &templates), Dialect::Oracle).unwrap();
        assert!(out.enriched.iter().all(|e| e.category == AUX_CATEGORY));
    }

    #[test]
    fn nothing_sensitive_nothing_enriched() {
        let backend = StubBackend::default();
        let templates = TemplateSet::builtin();
        let mut p = plan();
        for op in &mut p.operators {
            op.sensitive = false;
        }
        let out = map_functional_categories(&p, &CanonicalReference::builtin(), &Prompter::new(&backend, &templates), Dialect::Mysql)
            .unwrap();
        assert!(out.enriched.is_empty());
    }
}
