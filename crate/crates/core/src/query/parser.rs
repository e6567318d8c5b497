use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{Aggregate, CmpOp, Pattern, Predicate, Query, QueryError, Window};
use crate::event::{Schema, Value};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Real(f64),
    Str(String),
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Int(i) => format!("`{i}`"),
        Tok::Real(r) => format!("`{r}`"),
        Tok::Str(s) => format!("'{s}'"),
        Tok::Sym(s) => format!("`{s}`"),
        Tok::Eof => "end of input".into(),
    }
}

fn tokenize(text: &str) -> Result<Vec<Token>, QueryError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, col, msg: String| QueryError::Syntax { line, col, msg };
    while i < chars.len() {
        let c = chars[i];
        let (start_line, start_col) = (line, col);
        let mut advance = |n: usize, i: &mut usize| {
            for _ in 0..n {
                if chars[*i] == '\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
                *i += 1;
            }
        };
        if c.is_whitespace() {
            advance(1, &mut i);
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                advance(1, &mut i);
            }
            continue;
        }
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            let word: String = chars[i..j].iter().collect();
            advance(j - i, &mut i);
            Tok::Ident(word)
        } else if c.is_ascii_digit()
            || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()))
        {
            let mut j = i + 1;
            let mut real = false;
            while j < chars.len() && (chars[j].is_ascii_digit() || chars[j] == '.') {
                if chars[j] == '.' {
                    if real || !chars.get(j + 1).is_some_and(|d| d.is_ascii_digit()) {
                        break;
                    }
                    real = true;
                }
                j += 1;
            }
            let lit: String = chars[i..j].iter().collect();
            advance(j - i, &mut i);
            if real {
                Tok::Real(
                    lit.parse()
                        .map_err(|_| err(start_line, start_col, format!("bad number `{lit}`")))?,
                )
            } else {
                Tok::Int(
                    lit.parse()
                        .map_err(|_| err(start_line, start_col, format!("bad number `{lit}`")))?,
                )
            }
        } else if c == '\'' || c == '"' {
            let mut j = i + 1;
            while j < chars.len() && chars[j] != c {
                j += 1;
            }
            if j == chars.len() {
                return Err(err(start_line, start_col, "unterminated string".into()));
            }
            let s: String = chars[i + 1..j].iter().collect();
            advance(j + 1 - i, &mut i);
            Tok::Str(s)
        } else {
            let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            let sym = match two.as_str() {
                "<=" => Some("<="),
                ">=" => Some(">="),
                "!=" | "<>" => Some("!="),
                "==" => Some("="),
                _ => None,
            };
            if let Some(sym) = sym {
                advance(2, &mut i);
                Tok::Sym(sym)
            } else {
                let sym = match c {
                    '(' => "(",
                    ')' => ")",
                    ',' => ",",
                    '.' => ".",
                    '+' => "+",
                    '*' => "*",
                    '[' => "[",
                    ']' => "]",
                    '<' => "<",
                    '>' => ">",
                    '=' => "=",
                    '/' => "/",
                    ';' => ";",
                    other => {
                        return Err(err(
                            start_line,
                            start_col,
                            format!("unexpected character `{other}`"),
                        ));
                    }
                };
                advance(1, &mut i);
                Tok::Sym(sym)
            }
        };
        out.push(Token {
            tok,
            line: start_line,
            col: start_col,
        });
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_at(&self, t: &Token, msg: String) -> QueryError {
        QueryError::Syntax {
            line: t.line,
            col: t.col,
            msg,
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
    }

    fn at_sym(&self, sym: &str) -> bool {
        matches!(&self.peek().tok, Tok::Sym(s) if *s == sym)
    }

    fn keyword(&mut self, kw: &str) -> Result<(), QueryError> {
        if self.at_keyword(kw) {
            self.next();
            Ok(())
        } else {
            let t = self.peek().clone();
            Err(self.error_at(&t, format!("expected {kw}, found {}", describe(&t.tok))))
        }
    }

    fn sym(&mut self, sym: &str) -> Result<(), QueryError> {
        if self.at_sym(sym) {
            self.next();
            Ok(())
        } else {
            let t = self.peek().clone();
            Err(self.error_at(&t, format!("expected `{sym}`, found {}", describe(&t.tok))))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, QueryError> {
        let t = self.next();
        match t.tok {
            Tok::Ident(s) => Ok(s),
            ref other => {
                Err(self.error_at(&t, format!("expected {what}, found {}", describe(other))))
            }
        }
    }

    fn uint(&mut self, what: &str) -> Result<u64, QueryError> {
        let t = self.next();
        match t.tok {
            Tok::Int(i) if i >= 0 => Ok(i as u64),
            ref other => Err(self.error_at(
                &t,
                format!(
                    "expected non-negative integer {what}, found {}",
                    describe(other)
                ),
            )),
        }
    }

    fn query(&mut self) -> Result<Query, QueryError> {
        let id = if self.at_keyword("QUERY") {
            self.next();
            match self.next() {
                Token {
                    tok: Tok::Ident(s), ..
                } => s,
                Token {
                    tok: Tok::Int(i), ..
                } => i.to_string(),
                t => {
                    return Err(
                        self.error_at(&t, format!("expected query id, found {}", describe(&t.tok)))
                    )
                }
            }
        } else {
            "q".into()
        };
        self.keyword("RETURN")?;
        let aggregate = self.aggregate()?;
        self.keyword("PATTERN")?;
        let pattern = self.pattern()?;
        let mut predicates = Vec::new();
        if self.at_keyword("WHERE") {
            self.next();
            predicates.push(self.predicate()?);
            while self.at_keyword("AND") {
                self.next();
                predicates.push(self.predicate()?);
            }
        }
        let mut groupby = Vec::new();
        if self.at_keyword("GROUPBY") {
            self.next();
            groupby.push(self.ident("attribute")?);
            while self.at_sym(",") {
                self.next();
                groupby.push(self.ident("attribute")?);
            }
        }
        self.keyword("WITHIN")?;
        let size = self.uint("window size")?;
        self.keyword("SLIDE")?;
        let slide = self.uint("window slide")?;
        if self.at_sym(";") {
            self.next();
        }
        Ok(Query {
            id,
            aggregate,
            pattern,
            predicates,
            groupby,
            window: Window::new(size, slide),
        })
    }

    fn type_attr(&mut self) -> Result<(String, String), QueryError> {
        let ty = self.ident("event type")?;
        self.sym(".")?;
        let attr = self.ident("attribute")?;
        Ok((ty, attr))
    }

    fn aggregate(&mut self) -> Result<Aggregate, QueryError> {
        let t = self.next();
        let name = match &t.tok {
            Tok::Ident(s) => s.to_ascii_uppercase(),
            other => {
                return Err(
                    self.error_at(&t, format!("expected aggregate, found {}", describe(other)))
                )
            }
        };
        self.sym("(")?;
        let agg = match name.as_str() {
            "COUNT" => {
                if self.at_sym("*") {
                    self.next();
                    Aggregate::CountAll
                } else {
                    Aggregate::CountType(self.ident("event type or `*`")?)
                }
            }
            "SUM" | "AVG" | "MIN" | "MAX" => {
                let (ty, attr) = self.type_attr()?;
                match name.as_str() {
                    "SUM" => Aggregate::Sum(ty, attr),
                    "AVG" => Aggregate::Avg(ty, attr),
                    "MIN" => Aggregate::Min(ty, attr),
                    _ => Aggregate::Max(ty, attr),
                }
            }
            _ => return Err(self.error_at(&t, format!("unknown aggregate `{name}`"))),
        };
        self.sym(")")?;
        Ok(agg)
    }

    fn pattern(&mut self) -> Result<Pattern, QueryError> {
        let mut p = self.pattern_primary()?;
        while self.at_sym("+") {
            self.next();
            p = Pattern::Kleene(Box::new(p));
        }
        Ok(p)
    }

    fn pattern_primary(&mut self) -> Result<Pattern, QueryError> {
        let t = self.next();
        match &t.tok {
            Tok::Sym("(") => {
                let p = self.pattern()?;
                self.sym(")")?;
                Ok(p)
            }
            Tok::Ident(word) => {
                let upper = word.to_ascii_uppercase();
                let is_call = self.at_sym("(");
                match upper.as_str() {
                    "SEQ" if is_call => {
                        self.next();
                        let mut parts = alloc::vec![self.pattern()?];
                        while self.at_sym(",") {
                            self.next();
                            parts.push(self.pattern()?);
                        }
                        self.sym(")")?;
                        Ok(if parts.len() == 1 {
                            parts.pop().unwrap()
                        } else {
                            Pattern::Seq(parts)
                        })
                    }
                    "OR" | "AND" if is_call => {
                        self.next();
                        let a = self.pattern()?;
                        self.sym(",")?;
                        let b = self.pattern()?;
                        self.sym(")")?;
                        Ok(if upper == "OR" {
                            Pattern::Or(Box::new(a), Box::new(b))
                        } else {
                            Pattern::And(Box::new(a), Box::new(b))
                        })
                    }
                    "NOT" if is_call => {
                        Err(QueryError::Unsupported("negation (NOT) patterns".into()))
                    }
                    _ => Ok(Pattern::Atom(word.clone())),
                }
            }
            other => Err(self.error_at(&t, format!("expected pattern, found {}", describe(other)))),
        }
    }

    fn cmp_op(&mut self) -> Result<CmpOp, QueryError> {
        let t = self.next();
        Ok(match t.tok {
            Tok::Sym("<") => CmpOp::Lt,
            Tok::Sym("<=") => CmpOp::Le,
            Tok::Sym("=") => CmpOp::Eq,
            Tok::Sym(">=") => CmpOp::Ge,
            Tok::Sym(">") => CmpOp::Gt,
            Tok::Sym("!=") => CmpOp::Ne,
            ref other => {
                return Err(self.error_at(
                    &t,
                    format!("expected comparison, found {}", describe(other)),
                ))
            }
        })
    }

    fn predicate(&mut self) -> Result<Predicate, QueryError> {
        if self.at_sym("[") {
            self.next();
            let mut attrs = alloc::vec![self.ident("attribute")?];
            while self.at_sym(",") {
                self.next();
                attrs.push(self.ident("attribute")?);
            }
            self.sym("]")?;
            return Ok(Predicate::Equivalence(attrs));
        }
        let (ty, attr) = self.type_attr()?;
        let op = self.cmp_op()?;
        if self.at_keyword("NEXT") {
            self.next();
            self.sym("(")?;
            let right_ty = self.ident("event type")?;
            self.sym(")")?;
            self.sym(".")?;
            let right_attr = self.ident("attribute")?;
            return Ok(Predicate::Adjacent {
                left_ty: ty,
                left_attr: attr,
                op,
                right_ty,
                right_attr,
            });
        }
        let t = self.next();
        let value = match t.tok {
            Tok::Int(i) => Value::Int(i),
            Tok::Real(r) => Value::Real(r),
            Tok::Str(s) => Value::Text(s),
            ref other => {
                return Err(
                    self.error_at(&t, format!("expected constant, found {}", describe(other)))
                )
            }
        };
        Ok(Predicate::Local {
            ty,
            attr,
            op,
            value,
        })
    }
}

/// Parses and validates one query. The `QUERY <id>` header is optional; a
/// query without one gets the id `q`.
pub fn parse_query(text: &str, schema: &Schema) -> Result<Query, QueryError> {
    let mut p = Parser {
        toks: tokenize(text)?,
        pos: 0,
    };
    let q = p.query()?;
    if p.peek().tok != Tok::Eof {
        let t = p.peek().clone();
        return Err(p.error_at(&t, format!("unexpected {} after query", describe(&t.tok))));
    }
    q.validate(schema)?;
    Ok(q)
}

/// Parses a file of queries, each introduced by `QUERY <id>`.
pub fn parse_query_file(text: &str, schema: &Schema) -> Result<Vec<Query>, QueryError> {
    let mut p = Parser {
        toks: tokenize(text)?,
        pos: 0,
    };
    let mut out: Vec<Query> = Vec::new();
    while p.peek().tok != Tok::Eof {
        if !out.is_empty() && !p.at_keyword("QUERY") {
            let t = p.peek().clone();
            return Err(p.error_at(&t, format!("expected QUERY, found {}", describe(&t.tok))));
        }
        let q = p.query()?;
        if out.iter().any(|o| o.id == q.id) {
            return Err(QueryError::Invalid {
                query: q.id,
                msg: "duplicate query id".into(),
            });
        }
        q.validate(schema)?;
        out.push(q);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::AttrKind;
    use alloc::vec;

    fn schema() -> Schema {
        Schema::from_slices(&[
            ("A", &[("x", AttrKind::Integer)]),
            (
                "B",
                &[("speed", AttrKind::Integer), ("name", AttrKind::Text)],
            ),
            ("C", &[]),
        ])
        .unwrap()
    }

    #[test]
    fn seq_with_kleene() {
        let q = parse_query(
            "RETURN COUNT(*) PATTERN SEQ(A,B+) WITHIN 10 SLIDE 10",
            &schema(),
        )
        .unwrap();
        assert_eq!(
            q.pattern,
            Pattern::seq(vec![Pattern::atom("A"), Pattern::atom("B").plus()])
        );
        assert_eq!(q.window, Window::new(10, 10));
        assert_eq!(q.aggregate, Aggregate::CountAll);
    }

    #[test]
    fn single_kleene() {
        let q = parse_query("RETURN COUNT(*) PATTERN B+ WITHIN 5 SLIDE 5", &schema()).unwrap();
        assert_eq!(q.pattern, Pattern::atom("B").plus());
    }

    #[test]
    fn syntax_error_has_location() {
        let err = parse_query("PATTERN SEQ(A,)", &schema()).unwrap_err();
        assert!(
            matches!(
                err,
                QueryError::Syntax {
                    line: 1,
                    col: 1,
                    ..
                }
            ),
            "{err:?}"
        );
        let err = parse_query(
            "RETURN COUNT(*)\nPATTERN SEQ(A,) WITHIN 1 SLIDE 1",
            &schema(),
        )
        .unwrap_err();
        assert!(
            matches!(
                err,
                QueryError::Syntax {
                    line: 2,
                    col: 15,
                    ..
                }
            ),
            "{err:?}"
        );
    }

    #[test]
    fn predicates_and_groupby() {
        let text = "QUERY q7 RETURN SUM(B.speed) PATTERN SEQ(A, B+) \
                    WHERE B.speed < 10 AND [x] AND B.speed <= NEXT(B).speed AND B.name = 'fast' \
                    GROUPBY x WITHIN 10 SLIDE 5";
        let s = Schema::from_slices(&[
            ("A", &[("x", AttrKind::Integer)]),
            (
                "B",
                &[
                    ("x", AttrKind::Integer),
                    ("speed", AttrKind::Integer),
                    ("name", AttrKind::Text),
                ],
            ),
        ])
        .unwrap();
        let q = parse_query(text, &s).unwrap();
        assert_eq!(q.id, "q7");
        assert_eq!(q.predicates.len(), 4);
        assert_eq!(q.partition_attrs(), vec!["x".to_string()]);
        let again = parse_query(&q.to_string(), &s).unwrap();
        assert_eq!(again, q);
    }

    #[test]
    fn rejects_unknowns_and_negation() {
        let s = schema();
        assert_eq!(
            parse_query("RETURN COUNT(*) PATTERN SEQ(A,Z+) WITHIN 1 SLIDE 1", &s),
            Err(QueryError::UnknownType("Z".into()))
        );
        assert!(matches!(
            parse_query("RETURN SUM(B.nope) PATTERN B+ WITHIN 1 SLIDE 1", &s),
            Err(QueryError::UnknownAttr { .. })
        ));
        assert!(matches!(
            parse_query(
                "RETURN COUNT(*) PATTERN SEQ(A, NOT(C), B+) WITHIN 1 SLIDE 1",
                &s
            ),
            Err(QueryError::Unsupported(_))
        ));
        assert!(matches!(
            parse_query("RETURN COUNT(*) PATTERN SEQ(B, B+) WITHIN 1 SLIDE 1", &s),
            Err(QueryError::Unsupported(_))
        ));
        assert!(matches!(
            parse_query("RETURN COUNT(*) PATTERN B+ WITHIN 2 SLIDE 3", &s),
            Err(QueryError::Invalid { .. })
        ));
    }

    #[test]
    fn query_file() {
        let text = "QUERY q1 RETURN COUNT(*) PATTERN SEQ(A,B+) WITHIN 10 SLIDE 10\n\
                    # second\n\
                    QUERY q2 RETURN COUNT(*) PATTERN (SEQ(C,B+))+ WITHIN 10 SLIDE 10\n";
        let qs = parse_query_file(text, &schema()).unwrap();
        assert_eq!(qs.len(), 2);
        assert_eq!(qs[1].id, "q2");
        assert!(matches!(qs[1].pattern, Pattern::Kleene(_)));
    }
}
