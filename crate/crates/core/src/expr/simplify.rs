use super::{BinOp, Expr};

/// Rewrites an expression with constant folding and the identities
/// `E+0=E`, `E+E=2*E`, `E-0=E`, `1*E=E` and `E/1=E` (the additive and
/// multiplicative identities are also matched in mirrored position).
///
/// Rules run bottom-up, folding first at each node, until nothing fires.
pub fn simplify(expr: &Expr) -> Expr {
    let mut current = expr.clone();
    loop {
        let next = simplify_pass(&current);
        if next == current {
            return next;
        }
        current = next;
    }
}

fn simplify_pass(expr: &Expr) -> Expr {
    match expr {
        Expr::Feature(_) | Expr::Const(_) => expr.clone(),
        Expr::Binary(op, l, r) => rewrite(*op, simplify_pass(l), simplify_pass(r)),
    }
}

fn is_const(e: &Expr, value: f64) -> bool {
    matches!(e, Expr::Const(c) if *c == value)
}

fn rewrite(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
    if let (Expr::Const(a), Expr::Const(b)) = (&lhs, &rhs) {
        return Expr::Const(op.apply(*a, *b));
    }
    match op {
        BinOp::Add if is_const(&rhs, 0.0) => lhs,
        BinOp::Add if is_const(&lhs, 0.0) => rhs,
        BinOp::Add if lhs == rhs => Expr::mul(Expr::Const(2.0), lhs),
        BinOp::Sub if is_const(&rhs, 0.0) => lhs,
        BinOp::Mul if is_const(&lhs, 1.0) => rhs,
        BinOp::Mul if is_const(&rhs, 1.0) => lhs,
        BinOp::Div if is_const(&rhs, 1.0) => lhs,
        _ => Expr::binary(op, lhs, rhs),
    }
}
