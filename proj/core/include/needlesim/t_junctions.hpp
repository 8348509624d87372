#pragma once

#include "needlesim/hex_mesh.hpp"

#include <Eigen/SparseCore>

#include <map>
#include <vector>

namespace needlesim {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Scans the rest configuration for nodes lying on an edge or face of an
/// active element without being one of its corners. When several elements
/// qualify the coarsest one supplies the masters.
std::vector<TJunction> detect_t_junctions(const HexMesh& mesh);

/// Slave expressed directly in terms of conforming nodes.
struct FlatJunction {
  NodeId slave;
  std::map<NodeId, double> masters;
};

/// Substitutes chained junctions until every master is a conforming node.
std::vector<FlatJunction> flatten_t_junctions(const std::vector<TJunction>& junctions);

/// Rows u_s - sum_k w_k u_k = 0 per axis; columns index 3*node+axis.
SparseMatrix build_t_matrix(const std::vector<TJunction>& junctions, std::size_t num_nodes);

/// Prolongation u = P u_c from conforming-node DOFs to all node DOFs.
/// `free_dof` receives, for each full DOF, its reduced index or -1 if slave.
SparseMatrix build_prolongation(const std::vector<TJunction>& junctions, std::size_t num_nodes,
                                std::vector<int>* free_dof = nullptr);

}  // namespace needlesim
