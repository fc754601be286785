//! Metadata filter expressions: a conjunction of `field OP literal` clauses.
//!
//! The textual form accepted by [`FilterExpr::parse`] is
//!
//! ```text
//! expr    := clause ( "&&" clause )*
//! clause  := field op literal | field "in" "(" literal ( "," literal )* ")"
//! op      := "=" | "!=" | "<" | "<=" | ">" | ">="
//! literal := number | "double-quoted string" | true | false
//! ```
//!
//! for example `price<100 && brand="Reebok"`. An empty string is the empty
//! conjunction and matches everything.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::document::{validate_key, MetaValue, Metadata};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompareOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    In,
}

impl CompareOp {
    pub fn is_ordering(self) -> bool {
        matches!(
            self,
            CompareOp::Lt | CompareOp::Le | CompareOp::Gt | CompareOp::Ge
        )
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Eq => "=",
            CompareOp::Ne => "!=",
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
            CompareOp::In => "in",
        }
    }
}

impl fmt::Display for CompareOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    Value(MetaValue),
    List(Vec<MetaValue>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clause {
    field: String,
    op: CompareOp,
    operand: Operand,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("invalid filter field {0:?}")]
    InvalidField(String),
    #[error("operator `{op}` requires a number literal, got {literal}")]
    NonNumericOrdering {
        op: CompareOp,
        literal: &'static str,
    },
    #[error("operator `{op}` does not accept this operand shape")]
    OperandShape { op: CompareOp },
    #[error("`in` list must be nonempty and of one type")]
    BadList,
    #[error("type mismatch on field `{field}`: stored {stored}, operator `{op}` with {literal}")]
    TypeMismatch {
        field: String,
        op: CompareOp,
        stored: &'static str,
        literal: &'static str,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("filter parse error at column {column}: {message}")]
pub struct FilterParseError {
    /// 1-based character position.
    pub column: usize,
    pub message: String,
}

impl Clause {
    /// Builds a clause, rejecting ordering operators on non-numbers and
    /// mismatched operand shapes.
    pub fn new(
        field: impl Into<String>,
        op: CompareOp,
        operand: Operand,
    ) -> Result<Self, FilterError> {
        let field = field.into();
        validate_key(&field).map_err(|_| FilterError::InvalidField(field.clone()))?;
        match (&operand, op) {
            (Operand::List(items), CompareOp::In) => {
                let first = items.first().ok_or(FilterError::BadList)?;
                if !items.iter().all(|v| v.same_type(first)) {
                    return Err(FilterError::BadList);
                }
            }
            (Operand::List(_), _) | (Operand::Value(_), CompareOp::In) => {
                return Err(FilterError::OperandShape { op })
            }
            (Operand::Value(v), op) if op.is_ordering() && !matches!(v, MetaValue::Number(_)) => {
                return Err(FilterError::NonNumericOrdering {
                    op,
                    literal: v.type_name(),
                })
            }
            _ => {}
        }
        Ok(Self { field, op, operand })
    }

    pub fn compare(
        field: impl Into<String>,
        op: CompareOp,
        value: impl Into<MetaValue>,
    ) -> Result<Self, FilterError> {
        Self::new(field, op, Operand::Value(value.into()))
    }

    pub fn one_of(field: impl Into<String>, values: Vec<MetaValue>) -> Result<Self, FilterError> {
        Self::new(field, CompareOp::In, Operand::List(values))
    }

    pub fn field(&self) -> &str {
        &self.field
    }

    pub fn op(&self) -> CompareOp {
        self.op
    }

    pub fn operand(&self) -> &Operand {
        &self.operand
    }

    /// Evaluates this clause alone. An absent field is `false`.
    pub fn evaluate(&self, metadata: &Metadata) -> Result<bool, FilterError> {
        let Some(stored) = metadata.get(&self.field) else {
            return Ok(false);
        };
        let literal = match &self.operand {
            Operand::Value(v) => v,
            Operand::List(items) => &items[0],
        };
        if !stored.same_type(literal) {
            return Err(FilterError::TypeMismatch {
                field: self.field.clone(),
                op: self.op,
                stored: stored.type_name(),
                literal: literal.type_name(),
            });
        }
        Ok(match (&self.operand, self.op) {
            (Operand::List(items), _) => items.iter().any(|v| v == stored),
            (Operand::Value(v), CompareOp::Eq) => v == stored,
            (Operand::Value(v), CompareOp::Ne) => v != stored,
            (Operand::Value(v), op) => {
                // Both numbers: checked at construction and above.
                let (lhs, rhs) = (stored.as_number().unwrap(), v.as_number().unwrap());
                match op {
                    CompareOp::Lt => lhs < rhs,
                    CompareOp::Le => lhs <= rhs,
                    CompareOp::Gt => lhs > rhs,
                    CompareOp::Ge => lhs >= rhs,
                    _ => unreachable!(),
                }
            }
        })
    }
}

/// A conjunction of clauses. The empty conjunction matches every document.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FilterExpr {
    clauses: Vec<Clause>,
}

impl FilterExpr {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn new(clauses: Vec<Clause>) -> Self {
        Self { clauses }
    }

    pub fn and(mut self, clause: Clause) -> Self {
        self.clauses.push(clause);
        self
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    /// True iff every clause holds. All clauses are evaluated so a type error
    /// surfaces regardless of clause order.
    pub fn evaluate(&self, metadata: &Metadata) -> Result<bool, FilterError> {
        let mut result = true;
        for clause in &self.clauses {
            result &= clause.evaluate(metadata)?;
        }
        Ok(result)
    }

    pub fn parse(input: &str) -> Result<Self, FilterParseError> {
        Parser::new(input).parse()
    }
}

/// Evaluates `expr` against a document's metadata.
pub fn evaluate_filter(
    expr: &FilterExpr,
    doc: &crate::document::Document,
) -> Result<bool, FilterError> {
    expr.evaluate(doc.metadata())
}

impl FromStr for FilterExpr {
    type Err = FilterParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

fn write_literal(f: &mut fmt::Formatter<'_>, value: &MetaValue) -> fmt::Result {
    match value {
        MetaValue::Bool(b) => write!(f, "{b}"),
        MetaValue::Number(n) => write!(f, "{n}"),
        MetaValue::String(s) => {
            f.write_str("\"")?;
            for c in s.chars() {
                if c == '"' || c == '\\' {
                    f.write_str("\\")?;
                }
                write!(f, "{c}")?;
            }
            f.write_str("\"")
        }
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.operand {
            Operand::Value(v) => {
                write!(f, "{}{}", self.field, self.op)?;
                write_literal(f, v)
            }
            Operand::List(items) => {
                write!(f, "{} in (", self.field)?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write_literal(f, v)?;
                }
                f.write_str(")")
            }
        }
    }
}

impl fmt::Display for FilterExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, clause) in self.clauses.iter().enumerate() {
            if i > 0 {
                f.write_str(" && ")?;
            }
            write!(f, "{clause}")?;
        }
        Ok(())
    }
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

fn is_field_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.'
}

impl Parser {
    fn new(input: &str) -> Self {
        Self {
            chars: input.chars().collect(),
            pos: 0,
        }
    }

    fn error<T>(&self, at: usize, message: impl Into<String>) -> Result<T, FilterParseError> {
        Err(FilterParseError {
            column: at + 1,
            message: message.into(),
        })
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, s: &str) -> bool {
        let n = s.chars().count();
        if self.chars.len() >= self.pos + n
            && self.chars[self.pos..self.pos + n]
                .iter()
                .copied()
                .eq(s.chars())
        {
            self.pos += n;
            true
        } else {
            false
        }
    }

    fn word(&mut self) -> String {
        let start = self.pos;
        while self.peek().is_some_and(is_field_char) {
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().collect()
    }

    fn parse(mut self) -> Result<FilterExpr, FilterParseError> {
        let mut clauses = Vec::new();
        self.skip_ws();
        if self.peek().is_none() {
            return Ok(FilterExpr::all());
        }
        loop {
            clauses.push(self.clause()?);
            self.skip_ws();
            if self.peek().is_none() {
                break;
            }
            let at = self.pos;
            if !self.eat("&&") {
                return self.error(at, "expected `&&` between clauses");
            }
            self.skip_ws();
        }
        Ok(FilterExpr::new(clauses))
    }

    fn clause(&mut self) -> Result<Clause, FilterParseError> {
        let field_at = self.pos;
        let field = self.word();
        if field.is_empty() {
            return self.error(field_at, "expected a field name");
        }
        self.skip_ws();
        let op_at = self.pos;
        let op = if self.eat("<=") {
            CompareOp::Le
        } else if self.eat(">=") {
            CompareOp::Ge
        } else if self.eat("!=") {
            CompareOp::Ne
        } else if self.eat("<") {
            CompareOp::Lt
        } else if self.eat(">") {
            CompareOp::Gt
        } else if self.eat("=") {
            CompareOp::Eq
        } else {
            let word = self.word();
            if word.eq_ignore_ascii_case("in") {
                CompareOp::In
            } else {
                return self.error(op_at, "expected an operator (=, !=, <, <=, >, >=, in)");
            }
        };
        self.skip_ws();
        let operand_at = self.pos;
        let operand = if op == CompareOp::In {
            if !self.eat("(") {
                return self.error(self.pos, "expected `(` after `in`");
            }
            let mut items = Vec::new();
            loop {
                self.skip_ws();
                items.push(self.literal()?);
                self.skip_ws();
                if self.eat(",") {
                    continue;
                }
                if self.eat(")") {
                    break;
                }
                return self.error(self.pos, "expected `,` or `)`");
            }
            Operand::List(items)
        } else {
            Operand::Value(self.literal()?)
        };
        Clause::new(field, op, operand).map_err(|e| FilterParseError {
            column: operand_at + 1,
            message: e.to_string(),
        })
    }

    fn literal(&mut self) -> Result<MetaValue, FilterParseError> {
        let start = self.pos;
        match self.peek() {
            Some('"') => {
                self.pos += 1;
                let mut s = String::new();
                loop {
                    match self.peek() {
                        None => return self.error(start, "unterminated string literal"),
                        Some('"') => {
                            self.pos += 1;
                            break;
                        }
                        Some('\\') => {
                            self.pos += 1;
                            match self.peek() {
                                Some(c) => s.push(c),
                                None => return self.error(start, "unterminated string literal"),
                            }
                            self.pos += 1;
                        }
                        Some(c) => {
                            s.push(c);
                            self.pos += 1;
                        }
                    }
                }
                Ok(MetaValue::String(s))
            }
            Some(c) if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' => {
                while self
                    .peek()
                    .is_some_and(|c| c.is_ascii_digit() || matches!(c, '-' | '+' | '.' | 'e' | 'E'))
                {
                    self.pos += 1;
                }
                let text: String = self.chars[start..self.pos].iter().collect();
                match text.parse::<f64>() {
                    Ok(n) if n.is_finite() => Ok(MetaValue::Number(n)),
                    _ => self.error(start, format!("invalid number literal {text:?}")),
                }
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let word = self.word();
                match word.as_str() {
                    "true" => Ok(MetaValue::Bool(true)),
                    "false" => Ok(MetaValue::Bool(false)),
                    _ => self.error(
                        start,
                        format!("unquoted string {word:?}; use double quotes"),
                    ),
                }
            }
            _ => self.error(start, "expected a literal"),
        }
    }
}
