use std::cmp::Ordering;

use sqlparser::ast::Statement;
use sqlparser::parser::Parser;

use super::profile::GrammarProfile;
use crate::model::{Cell, Dialect};

pub const REL_TOLERANCE: f64 = 1e-6;

fn numeric(c: &Cell) -> Option<f64> {
    match c {
        Cell::Int(i) => Some(*i as f64),
        Cell::Float(f) => Some(*f),
        _ => None,
    }
}

/// Cell equality: numbers within relative tolerance, NULL equals NULL, text
/// compared after trimming trailing whitespace.
pub fn cells_equal(a: &Cell, b: &Cell) -> bool {
    match (a, b) {
        (Cell::Null, Cell::Null) => true,
        (Cell::Text(x), Cell::Text(y)) => x.trim_end() == y.trim_end(),
        _ => match (numeric(a), numeric(b)) {
            (Some(x), Some(y)) => {
                if x == y {
                    return true;
                }
                let scale = x.abs().max(y.abs());
                (x - y).abs() <= REL_TOLERANCE * scale
            }
            _ => false,
        },
    }
}

fn rank(c: &Cell) -> u8 {
    match c {
        Cell::Null => 0,
        Cell::Int(_) | Cell::Float(_) => 1,
        Cell::Text(_) => 2,
    }
}

fn cell_order(a: &Cell, b: &Cell) -> Ordering {
    rank(a).cmp(&rank(b)).then_with(|| match (a, b) {
        (Cell::Text(x), Cell::Text(y)) => x.trim_end().cmp(y.trim_end()),
        _ => match (numeric(a), numeric(b)) {
            (Some(x), Some(y)) => x.total_cmp(&y),
            _ => Ordering::Equal,
        },
    })
}

fn row_order(a: &[Cell], b: &[Cell]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = cell_order(x, y);
        if o != Ordering::Equal {
            return o;
        }
    }
    a.len().cmp(&b.len())
}

fn rows_equal(a: &[Vec<Cell>], b: &[Vec<Cell>]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| x.len() == y.len() && x.iter().zip(y).all(|(p, q)| cells_equal(p, q)))
}

/// Result-set identity. Without `order_sensitive` rows are compared as
/// multisets by sorting both sides canonically first.
pub fn compare_result_sets(got: &[Vec<Cell>], gold: &[Vec<Cell>], order_sensitive: bool) -> bool {
    if order_sensitive {
        return rows_equal(got, gold);
    }
    let mut a = got.to_vec();
    let mut b = gold.to_vec();
    a.sort_by(|x, y| row_order(x, y));
    b.sort_by(|x, y| row_order(x, y));
    rows_equal(&a, &b)
}

/// Whether the outermost query carries an ORDER BY.
pub fn has_top_level_order_by(sql: &str, dialect: Dialect) -> bool {
    let profile = GrammarProfile::for_dialect(dialect);
    match Parser::parse_sql(profile.parser_dialect(), sql) {
        Ok(stmts) => stmts.iter().any(|s| match s {
            Statement::Query(q) => q.order_by.is_some(),
            _ => false,
        }),
        Err(_) => sql.to_ascii_uppercase().contains("ORDER BY"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ints(v: &[i64]) -> Vec<Vec<Cell>> {
        v.iter().map(|i| vec![Cell::Int(*i)]).collect()
    }

    #[test]
    fn multiset_ignores_order() {
        assert!(compare_result_sets(&ints(&[1, 2]), &ints(&[2, 1]), false));
        assert!(!compare_result_sets(&ints(&[1, 2]), &ints(&[2, 1]), true));
        assert!(!compare_result_sets(&ints(&[1, 1]), &ints(&[1]), false));
    }

    #[test]
    fn tolerance_boundary() {
        let f = |x: f64| vec![vec![Cell::Float(x)]];
        assert!(compare_result_sets(&f(1.0000001), &f(1.0), false));
        assert!(compare_result_sets(&f(1.000001), &f(1.0), false));
        assert!(!compare_result_sets(&f(1.00001), &f(1.0), false));
        assert!(compare_result_sets(&f(2.0), &ints(&[2]), true));
    }

    #[test]
    fn null_and_text_rules() {
        assert!(cells_equal(&Cell::Null, &Cell::Null));
        assert!(cells_equal(&Cell::Text("a  ".into()), &Cell::Text("a".into())));
        assert!(!cells_equal(&Cell::Text(" a".into()), &Cell::Text("a".into())));
        assert!(!cells_equal(&Cell::Text("1".into()), &Cell::Int(1)));
        assert!(!cells_equal(&Cell::Null, &Cell::Int(0)));
    }

    #[test]
    fn detects_top_level_order_by() {
        assert!(has_top_level_order_by("SELECT a FROM t ORDER BY a", Dialect::Sqlite));
        assert!(!has_top_level_order_by("SELECT a FROM (SELECT a FROM t ORDER BY a) s", Dialect::Sqlite));
    }

    fn cell() -> impl Strategy<Value = Cell> {
        prop_oneof![
            Just(Cell::Null),
            (-5i64..5).prop_map(Cell::Int),
            (-5i64..5).prop_map(|i| Cell::Float(i as f64 / 2.0)),
            "[ab]{0,2}".prop_map(Cell::Text),
        ]
    }

    proptest! {
        #[test]
        fn reflexive_and_symmetric(a in prop::collection::vec(prop::collection::vec(cell(), 2), 0..6),
                                   b in prop::collection::vec(prop::collection::vec(cell(), 2), 0..6)) {
            prop_assert!(compare_result_sets(&a, &a, true));
            prop_assert!(compare_result_sets(&a, &a, false));
            prop_assert_eq!(compare_result_sets(&a, &b, false), compare_result_sets(&b, &a, false));
            let mut rev = a.clone();
            rev.reverse();
            prop_assert!(compare_result_sets(&a, &rev, false));
        }
    }
}
