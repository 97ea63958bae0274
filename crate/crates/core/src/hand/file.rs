//! On-disk JSON layout of a hand description.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{
    HandError, HandModel, Joint, JointKind, Link, Primitive, Site, HUMAN_FINGERS, WRIST_DOF,
};
use crate::geom::{Pose, Vec3};

const WRIST_NAMES: [&str; WRIST_DOF] = [
    "wrist_tx", "wrist_ty", "wrist_tz", "wrist_rx", "wrist_ry", "wrist_rz",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FloatingBaseFile {
    /// Limits of `tx, ty, tz, rx, ry, rz`.
    pub limits: [[f64; 2]; WRIST_DOF],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkFile {
    pub name: String,
    #[serde(default = "Pose::identity")]
    pub offset: Pose,
    #[serde(default)]
    pub collision: Vec<Primitive>,
    #[serde(default)]
    pub mass: f64,
    #[serde(default)]
    pub com: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointFile {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: JointKind,
    pub axis: [f64; 3],
    pub parent: String,
    pub child: String,
    pub limits: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SiteFile {
    pub name: String,
    pub link: String,
    #[serde(default)]
    pub position: [f64; 3],
}

/// Serialized hand description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HandFile {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floating_base: Option<FloatingBaseFile>,
    #[serde(default = "default_sign")]
    pub palm_normal_sign: f64,
    pub links: Vec<LinkFile>,
    pub joints: Vec<JointFile>,
    pub fingertip_sites: Vec<SiteFile>,
    /// Index MCP, ring MCP, wrist.
    pub palm_sites: [SiteFile; 3],
    /// Human finger index (`"0"` = thumb .. `"4"` = little) to fingertip site name.
    pub correspondence: BTreeMap<String, String>,
}

fn default_sign() -> f64 {
    1.0
}

fn joint_err(joint: &str, reason: impl Into<String>) -> HandError {
    HandError::Joint {
        joint: joint.to_string(),
        reason: reason.into(),
    }
}

fn link_err(link: &str, reason: impl Into<String>) -> HandError {
    HandError::Link {
        link: link.to_string(),
        reason: reason.into(),
    }
}

impl HandFile {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("hand file serializes")
    }

    pub fn build(&self) -> Result<HandModel, HandError> {
        if self.palm_normal_sign != 1.0 && self.palm_normal_sign != -1.0 {
            return Err(HandError::Site {
                site: "palm".into(),
                reason: format!(
                    "palm_normal_sign must be +1 or -1, got {}",
                    self.palm_normal_sign
                ),
            });
        }
        let floating = self.floating_base.is_some();
        let mut links: Vec<Link> = Vec::new();
        let mut joints: Vec<Joint> = Vec::new();
        let mut link_index: HashMap<String, usize> = HashMap::new();

        // Virtual links carrying the floating wrist joints.
        if let Some(fb) = &self.floating_base {
            for (k, name) in WRIST_NAMES.iter().enumerate() {
                let [lo, hi] = fb.limits[k];
                if lo.is_nan() || hi.is_nan() || lo > hi {
                    return Err(joint_err(name, "lower limit exceeds upper limit"));
                }
                let mut axis = Vec3::zeros();
                axis[k % 3] = 1.0;
                joints.push(Joint {
                    name: name.to_string(),
                    kind: if k < 3 {
                        JointKind::Prismatic
                    } else {
                        JointKind::Revolute
                    },
                    axis,
                    parent: k.checked_sub(1),
                    child: k,
                    limits: (lo, hi),
                });
                links.push(Link {
                    name: format!("{name}_link"),
                    offset: Pose::identity(),
                    collision: Vec::new(),
                    mass: 0.0,
                    com: Vec3::zeros(),
                    parent_joint: Some(k),
                });
            }
        }
        let virtual_links = links.len();

        if self.links.is_empty() {
            return Err(link_err("<none>", "hand has no links"));
        }
        for lf in &self.links {
            if link_index.contains_key(&lf.name)
                || WRIST_NAMES.iter().any(|w| format!("{w}_link") == lf.name)
            {
                return Err(link_err(&lf.name, "duplicate link name"));
            }
            if !lf.offset.is_finite() || lf.mass.is_nan() || lf.mass < 0.0 {
                return Err(link_err(
                    &lf.name,
                    "offset must be finite and mass non-negative",
                ));
            }
            for p in &lf.collision {
                if p.radius().is_nan() || p.radius() <= 0.0 {
                    return Err(link_err(&lf.name, "collision radius must be positive"));
                }
            }
            link_index.insert(lf.name.clone(), links.len());
            links.push(Link {
                name: lf.name.clone(),
                offset: lf.offset,
                collision: lf.collision.clone(),
                mass: lf.mass,
                com: Vec3::from(lf.com),
                parent_joint: None,
            });
        }

        let mut seen = std::collections::HashSet::new();
        for jf in &self.joints {
            if !seen.insert(jf.name.as_str()) || WRIST_NAMES.contains(&jf.name.as_str()) {
                return Err(joint_err(&jf.name, "duplicate joint name"));
            }
            let parent = *link_index.get(&jf.parent).ok_or_else(|| {
                joint_err(&jf.name, format!("unknown parent link `{}`", jf.parent))
            })?;
            let child = *link_index
                .get(&jf.child)
                .ok_or_else(|| joint_err(&jf.name, format!("unknown child link `{}`", jf.child)))?;
            if parent == child {
                return Err(joint_err(&jf.name, "parent and child are the same link"));
            }
            if links[child].parent_joint.is_some() {
                return Err(joint_err(
                    &jf.name,
                    format!("link `{}` already has a parent joint", jf.child),
                ));
            }
            let axis = Vec3::from(jf.axis);
            if !axis.iter().all(|c| c.is_finite()) || axis.norm() <= 1e-12 {
                return Err(joint_err(&jf.name, "axis must be a finite non-zero vector"));
            }
            let [lo, hi] = jf.limits;
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(joint_err(&jf.name, "lower limit exceeds upper limit"));
            }
            links[child].parent_joint = Some(joints.len());
            joints.push(Joint {
                name: jf.name.clone(),
                kind: jf.kind,
                axis: axis.normalize(),
                parent: Some(parent),
                child,
                limits: (lo, hi),
            });
        }

        // Cycle detection: follow parent joints upward from every link.
        for start in virtual_links..links.len() {
            let mut visited = vec![false; links.len()];
            let mut cur = start;
            while let Some(j) = links[cur].parent_joint {
                if visited[cur] {
                    return Err(joint_err(&joints[j].name, "joint closes a kinematic cycle"));
                }
                visited[cur] = true;
                match joints[j].parent {
                    Some(p) => cur = p,
                    None => break,
                }
            }
        }

        let roots: Vec<usize> = (virtual_links..links.len())
            .filter(|&l| links[l].parent_joint.is_none())
            .collect();
        if roots.len() != 1 {
            let names: Vec<&str> = roots.iter().map(|&l| links[l].name.as_str()).collect();
            return Err(link_err(
                names.first().copied().unwrap_or("<none>"),
                format!("expected exactly one root link, found {names:?}"),
            ));
        }
        let root = roots[0];
        if floating {
            // The root link rides on the last wrist joint.
            let rz = WRIST_DOF - 1;
            links[root].parent_joint = Some(rz);
            joints[rz].child = root;
            links.remove(rz);
            for j in joints.iter_mut() {
                if j.child > rz {
                    j.child -= 1;
                }
                if let Some(p) = j.parent.as_mut() {
                    if *p > rz {
                        *p -= 1;
                    }
                }
            }
            for l in link_index.values_mut() {
                *l -= 1;
            }
        }

        // Parent-before-child order.
        let mut order = Vec::with_capacity(links.len());
        let top = if floating { 0 } else { root - virtual_links };
        order.push(top);
        let mut head = 0;
        while head < order.len() {
            let l = order[head];
            head += 1;
            for j in joints.iter().filter(|j| j.parent == Some(l)) {
                order.push(j.child);
            }
        }
        debug_assert_eq!(order.len(), links.len());

        let resolve_site = |sf: &SiteFile| -> Result<Site, HandError> {
            let link = *link_index.get(&sf.link).ok_or_else(|| HandError::Site {
                site: sf.name.clone(),
                reason: format!("unknown link `{}`", sf.link),
            })?;
            Ok(Site {
                name: sf.name.clone(),
                link,
                position: Vec3::from(sf.position),
            })
        };
        let fingertips = self
            .fingertip_sites
            .iter()
            .map(resolve_site)
            .collect::<Result<Vec<_>, _>>()?;
        if fingertips.is_empty() || fingertips.len() > HUMAN_FINGERS {
            return Err(HandError::Correspondence(format!(
                "a hand needs 1 to {HUMAN_FINGERS} fingertip sites, got {}",
                fingertips.len()
            )));
        }
        let palm_sites = [
            resolve_site(&self.palm_sites[0])?,
            resolve_site(&self.palm_sites[1])?,
            resolve_site(&self.palm_sites[2])?,
        ];

        let mut correspondence = [None; HUMAN_FINGERS];
        for (key, site) in &self.correspondence {
            let h: usize = key
                .parse()
                .ok()
                .filter(|&h| h < HUMAN_FINGERS)
                .ok_or_else(|| {
                    HandError::Correspondence(format!("`{key}` is not a human finger index 0-4"))
                })?;
            let r = fingertips
                .iter()
                .position(|s| &s.name == site)
                .ok_or_else(|| {
                    HandError::Correspondence(format!("unknown fingertip site `{site}`"))
                })?;
            if correspondence.contains(&Some(r)) {
                return Err(HandError::Correspondence(format!(
                    "fingertip `{site}` is mapped twice"
                )));
            }
            correspondence[h] = Some(r);
        }
        if correspondence.iter().all(Option::is_none) {
            return Err(HandError::Correspondence("no finger is mapped".into()));
        }

        Ok(HandModel::from_parts(
            self.name.clone(),
            floating,
            joints,
            links,
            order,
            fingertips,
            palm_sites,
            self.palm_normal_sign,
            correspondence,
        ))
    }
}
