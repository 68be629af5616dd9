//! TSPLIB-style CVRP and Solomon VRPTW file parsing and writing.

use super::{Instance, InstanceError, Node, ProblemKind};
use std::collections::BTreeMap;

fn parse_num(token: &str, line: usize) -> Result<f64, InstanceError> {
    let v: f64 = token.parse().map_err(|_| InstanceError::NonNumericField {
        field: token.to_string(),
        line,
    })?;
    if !v.is_finite() {
        return Err(InstanceError::NonNumericField {
            field: token.to_string(),
            line,
        });
    }
    Ok(v)
}

/// Parses a TSPLIB-keyword CVRP file (NAME, DIMENSION, CAPACITY,
/// NODE_COORD_SECTION, DEMAND_SECTION, DEPOT_SECTION, EOF).
///
/// The depot named by DEPOT_SECTION is re-indexed to id 0; when the section
/// is absent the first coordinate row is taken as the depot. Customers keep
/// file order.
pub fn parse_cvrp(text: &str) -> Result<Instance, InstanceError> {
    let mut name = String::from("unnamed");
    let mut dimension: Option<usize> = None;
    let mut capacity: Option<f64> = None;
    let mut coords: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    let mut demands: BTreeMap<usize, f64> = BTreeMap::new();
    let mut depot_id: Option<usize> = None;

    #[derive(PartialEq)]
    enum Section {
        None,
        Coords,
        Demands,
        Depot,
    }
    let mut section = Section::None;

    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some((key, value)) = split_keyword(line) {
            section = Section::None;
            match key.as_str() {
                "NAME" => name = value.to_string(),
                "DIMENSION" => dimension = Some(parse_num(&value, ln)? as usize),
                "CAPACITY" => capacity = Some(parse_num(&value, ln)?),
                "NODE_COORD_SECTION" => section = Section::Coords,
                "DEMAND_SECTION" => section = Section::Demands,
                "DEPOT_SECTION" => section = Section::Depot,
                "EOF" => break,
                _ => {} // TYPE, COMMENT, EDGE_WEIGHT_TYPE, ...
            }
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match section {
            Section::Coords => {
                if fields.len() != 3 {
                    return Err(InstanceError::RowArityMismatch {
                        expected: 3,
                        found: fields.len(),
                    });
                }
                let id = parse_num(fields[0], ln)? as usize;
                coords.insert(id, (parse_num(fields[1], ln)?, parse_num(fields[2], ln)?));
            }
            Section::Demands => {
                if fields.len() != 2 {
                    return Err(InstanceError::RowArityMismatch {
                        expected: 2,
                        found: fields.len(),
                    });
                }
                let id = parse_num(fields[0], ln)? as usize;
                demands.insert(id, parse_num(fields[1], ln)?);
            }
            Section::Depot => {
                let v = parse_num(fields[0], ln)?;
                if v >= 0.0 && depot_id.is_none() {
                    depot_id = Some(v as usize);
                }
            }
            Section::None => {}
        }
    }

    let dimension =
        dimension.ok_or_else(|| InstanceError::MissingSection("DIMENSION".to_string()))?;
    let capacity =
        capacity.ok_or_else(|| InstanceError::MissingSection("CAPACITY".to_string()))?;
    if coords.is_empty() {
        return Err(InstanceError::MissingSection(
            "NODE_COORD_SECTION".to_string(),
        ));
    }
    if demands.is_empty() {
        return Err(InstanceError::MissingSection("DEMAND_SECTION".to_string()));
    }
    if coords.len() != dimension {
        return Err(InstanceError::DimensionMismatch {
            section: "NODE_COORD_SECTION".to_string(),
            expected: dimension,
            found: coords.len(),
        });
    }
    if demands.len() != dimension {
        return Err(InstanceError::DimensionMismatch {
            section: "DEMAND_SECTION".to_string(),
            expected: dimension,
            found: demands.len(),
        });
    }

    let depot = depot_id.unwrap_or_else(|| *coords.keys().next().unwrap());
    if !coords.contains_key(&depot) {
        return Err(InstanceError::InvalidDepot(format!(
            "DEPOT_SECTION names node {depot}, which has no coordinates"
        )));
    }

    // depot first, customers in file order
    let mut nodes = Vec::with_capacity(dimension);
    let make_node = |file_id: usize, new_id: usize| -> Result<Node, InstanceError> {
        let (x, y) = coords[&file_id];
        let demand = *demands
            .get(&file_id)
            .ok_or_else(|| InstanceError::DimensionMismatch {
                section: "DEMAND_SECTION".to_string(),
                expected: dimension,
                found: demands.len(),
            })?;
        Ok(Node {
            id: new_id,
            x,
            y,
            demand,
            ready: 0.0,
            due: f64::INFINITY,
            service: 0.0,
        })
    };
    nodes.push(make_node(depot, 0)?);
    for (&file_id, _) in coords.iter().filter(|(&id, _)| id != depot) {
        nodes.push(make_node(file_id, nodes.len())?);
    }

    Instance::new(name, ProblemKind::Cvrp, capacity, nodes, None)
}

fn split_keyword(line: &str) -> Option<(String, String)> {
    if let Some((key, value)) = line.split_once(':') {
        let key = key.trim().to_uppercase();
        if key.chars().all(|c| c.is_ascii_uppercase() || c == '_') && !key.is_empty() {
            return Some((key, value.trim().to_string()));
        }
        return None;
    }
    let upper = line.trim().to_uppercase();
    if upper.ends_with("_SECTION") || upper == "EOF" {
        return Some((upper, String::new()));
    }
    None
}

/// Writes an instance back to TSPLIB CVRP text; `parse_cvrp` of the output
/// yields a field-identical instance.
pub fn write_cvrp(inst: &Instance) -> String {
    let mut out = String::new();
    out.push_str(&format!("NAME : {}\n", inst.name));
    out.push_str("TYPE : CVRP\n");
    out.push_str(&format!("DIMENSION : {}\n", inst.nodes.len()));
    out.push_str("EDGE_WEIGHT_TYPE : EUC_2D\n");
    out.push_str(&format!("CAPACITY : {}\n", inst.capacity));
    out.push_str("NODE_COORD_SECTION\n");
    for (i, node) in inst.nodes.iter().enumerate() {
        out.push_str(&format!("{} {} {}\n", i + 1, node.x, node.y));
    }
    out.push_str("DEMAND_SECTION\n");
    for (i, node) in inst.nodes.iter().enumerate() {
        out.push_str(&format!("{} {}\n", i + 1, node.demand));
    }
    out.push_str("DEPOT_SECTION\n1\n-1\nEOF\n");
    out
}

/// Parses a Solomon VRPTW file: instance name, a VEHICLE header with
/// NUMBER/CAPACITY, then the customer table (CUST NO., XCOORD., YCOORD.,
/// DEMAND, READY TIME, DUE DATE, SERVICE TIME). Row 0 is the depot; its
/// ready/due times define the horizon `[S, E]`.
pub fn parse_solomon(text: &str) -> Result<Instance, InstanceError> {
    let mut lines = text.lines().enumerate();
    let mut name = String::new();
    for (_, raw) in lines.by_ref() {
        let line = raw.trim();
        if !line.is_empty() {
            name = line.to_string();
            break;
        }
    }
    if name.is_empty() {
        return Err(InstanceError::MissingHeader("instance name".to_string()));
    }

    // VEHICLE block: NUMBER CAPACITY labels then one row of two numbers
    let mut saw_vehicle = false;
    let mut vehicle_row: Option<(usize, f64)> = None;
    let mut saw_customer = false;
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();

    for (ln, raw) in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let upper = line.to_uppercase();
        if upper.starts_with("VEHICLE") {
            saw_vehicle = true;
            continue;
        }
        if upper.starts_with("CUSTOMER") {
            saw_customer = true;
            continue;
        }
        if upper.starts_with("NUMBER") || upper.starts_with("CUST") {
            continue; // column-label lines
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if saw_vehicle && !saw_customer {
            if fields.len() != 2 {
                return Err(InstanceError::MissingHeader(
                    "VEHICLE NUMBER/CAPACITY row".to_string(),
                ));
            }
            vehicle_row = Some((
                parse_num(fields[0], ln)? as usize,
                parse_num(fields[1], ln)?,
            ));
        } else if saw_customer {
            if fields.len() != 7 {
                return Err(InstanceError::RowArityMismatch {
                    expected: 7,
                    found: fields.len(),
                });
            }
            let vals = fields
                .iter()
                .map(|f| parse_num(f, ln))
                .collect::<Result<Vec<f64>, _>>()?;
            rows.push((ln, vals));
        }
    }

    let (vehicles, capacity) =
        vehicle_row.ok_or_else(|| InstanceError::MissingHeader("VEHICLE block".to_string()))?;
    if rows.is_empty() {
        return Err(InstanceError::MissingHeader("CUSTOMER table".to_string()));
    }

    let mut nodes = Vec::with_capacity(rows.len());
    for (i, (_, vals)) in rows.iter().enumerate() {
        let (ready, due) = (vals[4], vals[5]);
        if ready > due {
            return Err(InstanceError::InvertedTimeWindow {
                customer: i,
                ready,
                due,
            });
        }
        nodes.push(Node {
            id: i,
            x: vals[1],
            y: vals[2],
            demand: vals[3],
            ready,
            due,
            service: vals[6],
        });
    }

    Instance::new(name, ProblemKind::Vrptw, capacity, nodes, Some(vehicles))
}

/// Writes an instance back to Solomon text; `parse_solomon` of the output
/// yields a field-identical instance.
pub fn write_solomon(inst: &Instance) -> String {
    let mut out = String::new();
    out.push_str(&format!("{}\n\nVEHICLE\nNUMBER     CAPACITY\n", inst.name));
    out.push_str(&format!(
        "  {}         {}\n\n",
        inst.vehicles.unwrap_or(25),
        inst.capacity
    ));
    out.push_str(
        "CUSTOMER\nCUST NO.  XCOORD.   YCOORD.    DEMAND   READY TIME   DUE DATE   SERVICE TIME\n\n",
    );
    for node in &inst.nodes {
        out.push_str(&format!(
            "{} {} {} {} {} {} {}\n",
            node.id, node.x, node.y, node.demand, node.ready, node.due, node.service
        ));
    }
    out
}
