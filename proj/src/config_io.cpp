#include "gridpose/config_io.hpp"

namespace gridpose {

nlohmann::json gln_config_to_json(const GLNConfig& c) {
    return nlohmann::json{{"latent_channels", c.latent_channels},
                          {"blocks", c.blocks},
                          {"kernel_plan", c.kernel_plan},
                          {"dropout_p", c.dropout_p},
                          {"dynamic", c.dynamic},
                          {"grid_rows", c.grid.rows},
                          {"grid_cols", c.grid.cols},
                          {"sgt_mode", to_string(c.sgt_mode)},
                          {"normalization", to_string(c.normalization)},
                          {"seed", c.seed},
                          {"layout_file", c.layout_file},
                          {"pad_modes_a", c.pad_modes_a},
                          {"pad_modes_b", c.pad_modes_b}};
}

GLNConfig gln_config_from_json(const nlohmann::json& j) {
    GLNConfig c;
    c.latent_channels = j.value("latent_channels", c.latent_channels);
    c.blocks = j.value("blocks", c.blocks);
    c.kernel_plan = j.value("kernel_plan", c.kernel_plan);
    c.dropout_p = j.value("dropout_p", c.dropout_p);
    c.dynamic = j.value("dynamic", c.dynamic);
    c.grid.rows = j.value("grid_rows", c.grid.rows);
    c.grid.cols = j.value("grid_cols", c.grid.cols);
    if (j.contains("sgt_mode")) c.sgt_mode = sgt_mode_from_string(j.at("sgt_mode").get<std::string>());
    if (j.contains("normalization"))
        c.normalization = norm_mode_from_string(j.at("normalization").get<std::string>());
    c.seed = j.value("seed", c.seed);
    c.layout_file = j.value("layout_file", c.layout_file);
    c.pad_modes_a = j.value("pad_modes_a", c.pad_modes_a);
    c.pad_modes_b = j.value("pad_modes_b", c.pad_modes_b);
    return c;
}

nlohmann::json topology_to_json(const SkeletonTopology& t) {
    nlohmann::json edges = nlohmann::json::array();
    for (auto [a, b] : t.edges) edges.push_back({a, b});
    return nlohmann::json{{"joint_names", t.joint_names}, {"edges", edges}, {"root_index", t.root_index}};
}

SkeletonTopology topology_from_json(const nlohmann::json& j) {
    SkeletonTopology t;
    t.joint_names = j.at("joint_names").get<std::vector<std::string>>();
    for (const auto& e : j.at("edges")) t.edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    t.root_index = j.at("root_index").get<int>();
    t.validate();
    return t;
}

}  // namespace gridpose
