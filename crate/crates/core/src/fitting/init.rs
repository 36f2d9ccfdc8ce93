use crate::error::{AamError, Result};
use crate::geometry::{orient, project_onto_basis, WarpParams};
use crate::model::{fit_similarity, Aam, BasisMode};

fn collinear(pts: &[[f64; 2]; 3]) -> bool {
    let scale = pts
        .iter()
        .flat_map(|a| pts.iter().map(move |b| (a[0] - b[0]).hypot(a[1] - b[1])))
        .fold(0.0, f64::max);
    scale == 0.0 || orient(pts[0], pts[1], pts[2]).abs() <= 1e-9 * scale * scale
}

/// Parameters placing the mean shape by the least-squares similarity that
/// maps its `anchors` onto `targets`. `p` carries only that similarity in
/// appended mode and is zero in separate mode.
pub fn initialize_from_anchor_points(
    aam: &Aam,
    anchors: [usize; 3],
    targets: [[f64; 2]; 3],
) -> Result<WarpParams> {
    let s0 = aam.s0();
    let v = s0.n_points();
    if let Some(&bad) = anchors.iter().find(|&&i| i >= v) {
        return Err(AamError::InvalidConfig(format!(
            "anchor index {bad} out of range for {v} landmarks"
        )));
    }
    if anchors[0] == anchors[1] || anchors[1] == anchors[2] || anchors[0] == anchors[2] {
        return Err(AamError::DegenerateAnchors);
    }
    let src = anchors.map(|i| s0.point(i));
    if collinear(&src) || collinear(&targets) || targets.iter().flatten().any(|x| !x.is_finite()) {
        return Err(AamError::DegenerateAnchors);
    }
    let [re, im, tx, ty] = fit_similarity(&src, &targets).ok_or(AamError::DegenerateAnchors)?;
    let m = [[re, -im, tx], [im, re, ty]];
    match aam.mode() {
        BasisMode::Separate => Ok(WarpParams {
            p: vec![0.0; aam.n_params()],
            q: aam.global_kind().params_from_matrix(m)?,
        }),
        BasisMode::Appended => {
            let placed = s0.map_points(|[x, y]| [re * x - im * y + tx, im * x + re * y + ty]);
            Ok(WarpParams {
                p: project_onto_basis(s0, aam.basis(), placed.coords()),
                q: vec![0.0; aam.n_global()],
            })
        }
    }
}
