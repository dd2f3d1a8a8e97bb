#pragma once

#include <sstream>
#include <string>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

namespace xml_check {

/// True if the document parses as XML; `error` receives the parser message otherwise.
inline bool well_formed(const std::string& doc, std::string* error = nullptr) {
    std::istringstream in(doc);
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::read_xml(in, tree);
    } catch (const boost::property_tree::xml_parser_error& e) {
        if (error) *error = e.what();
        return false;
    }
    return true;
}

}  // namespace xml_check
